import os
from pathlib import Path
from typing import Optional

import polars as pl

from src.constraints.constraints import FeasibilityViolation

from src.utils.logger import logger

log = logger.bind(step="export")

SIGNIFICANT_DIGITS = 9


def float_token(value: float, digits: int = SIGNIFICANT_DIGITS) -> str:
    """`digits` significant digits, always readable back as a float (90.0 -> "90.0")."""
    text = f"{value:.{digits}g}"
    if any(mark in text for mark in (".", "e", "inf", "nan")):
        return text
    return text + ".0"


def format_floats(df: pl.DataFrame, digits: int = SIGNIFICANT_DIGITS) -> pl.DataFrame:
    """
    Render every float column with `digits` significant digits.
    - Keeps nulls as empty CSV fields.
    - Integer and string columns are left untouched.
    """
    float_cols = [name for name, dtype in df.schema.items() if dtype in (pl.Float32, pl.Float64)]
    return df.with_columns(
        pl.col(name).map_elements(lambda v: float_token(v, digits), return_dtype=pl.String)
        for name in float_cols
    )


def write_csv(df: pl.DataFrame, path: str | Path, digits: int = SIGNIFICANT_DIGITS) -> Path:
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    format_floats(df, digits).write_csv(path)
    log.info(f"Wrote {df.height:,} rows to {path}")
    return path


def write_text(text: str, path: str | Path) -> Path:
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    path.write_text(text if text.endswith("\n") else text + "\n")
    log.info(f"Wrote {path}")
    return path


def constraints_report_text(
    report: Optional[pl.DataFrame],
    violation: Optional[FeasibilityViolation] = None,
    error: Optional[str] = None,
    digits: int = SIGNIFICANT_DIGITS,
) -> str:
    """Human-readable constraint report: status line, then one line per constraint."""
    if error is not None:
        status = f"status: infeasible ({error})"
    elif violation is not None:
        group = "" if violation.group is None else f" group={violation.group + 1}"
        status = f"status: violated {violation.kind}{group} j={violation.index} gap={violation.gap:.{digits}g}"
    else:
        status = "status: feasible"
    lines = [status]
    if report is not None and report.height:
        for row in format_floats(report, digits).iter_rows(named=True):
            group = "-" if row["group"] is None else row["group"]
            lines.append(
                f"{row['kind']:<12} group={group} j={row['index']} t={row['time']} "
                f"floor={row['floor']} value={row['value']} slack={row['slack']}"
            )
    return "\n".join(lines)
