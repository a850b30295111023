from functools import wraps
from datetime import datetime, timezone

from src.db.models import RunHistory
from src.db.client import DatabaseClient

from src.utils.logger import logger

log = logger.bind(step="run-history")


def run_tracker(command: str):
    """
    Decorator recording a CLI command run (start/stop, exit code, error) in the
    run-history table. Commands receive the client as the `db_client` keyword;
    without one the command just runs.
    """
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            db_client: DatabaseClient | None = kwargs.get("db_client", None)
            if db_client is None:
                return func(*args, **kwargs)

            with db_client.get_session() as session:
                args_ns = args[0] if args else None
                run = RunHistory(
                    command=command,
                    scenario_path=str(getattr(args_ns, "scenario", "") or "") or None,
                    run_start=datetime.now(timezone.utc),
                )
                session.add(run)
                session.commit()
                session.refresh(run)  # Refresh to get run.id
                log.info(f"Run {run.id} ({command}) started at {run.run_start}")

                exit_code = None
                error_message = None
                try:
                    exit_code = func(*args, **kwargs)
                    return exit_code

                except Exception as e:
                    error_message = str(e)
                    exit_code = getattr(e, "exit_code", 1)
                    if hasattr(e, "exit_code"):
                        log.error(f"Run {run.id} failed: {error_message}")
                    else:
                        log.exception(f"Run {run.id} failed: {error_message}")
                    raise

                finally:
                    run.run_stop = datetime.now(timezone.utc)
                    run.exit_code = exit_code
                    run.success = exit_code == 0
                    run.error_message = error_message
                    session.commit()
                    log.info(f"Run {run.id} finished with exit code {exit_code}")

        return wrapper
    return decorator
