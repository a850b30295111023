from sqlalchemy import create_engine, select
from sqlalchemy.orm import sessionmaker

import polars as pl

from src.db.models import Base, RunHistory

import os
from contextlib import contextmanager

from src.utils.logger import logger

log = logger.bind(step="DB")

HISTORY_COLUMNS = ["id", "command", "scenario_path", "run_start", "run_stop", "exit_code", "success", "error_message"]


class DatabaseClient:
    """
    Client for the SQLite run-history database
    """

    def __init__(self, db_path: str):
        self.db_path = db_path
        self.db_url = "sqlite:///:memory:" if db_path == ":memory:" else f"sqlite:///{self.db_path}"
        self.engine = create_engine(self.db_url, connect_args={"check_same_thread": False}, echo=False)
        self.SessionLocal = sessionmaker(bind=self.engine, autoflush=False, autocommit=False)

    def init_db(self):
        """
        Creates the tables if they don't exist yet.
        """
        if self.db_path != ":memory:":
            os.makedirs(os.path.dirname(self.db_path) or ".", exist_ok=True)
        Base.metadata.create_all(bind=self.engine)
        log.debug(f"DB ready at {self.db_path}.")

    @contextmanager
    def get_session(self):
        """
        Generator that provides a SQLAlchemy session.
        """
        session = self.SessionLocal()
        try:
            yield session
        finally:
            session.close()

    def recent_runs(self, limit: int = 20) -> pl.DataFrame:
        """
        Latest runs first, as a polars DataFrame.
        """
        with self.get_session() as session:
            runs = session.scalars(select(RunHistory).order_by(RunHistory.id.desc()).limit(limit)).all()
            rows = [{col: getattr(run, col) for col in HISTORY_COLUMNS} for run in runs]
        if not rows:
            return pl.DataFrame(schema={col: pl.Null for col in HISTORY_COLUMNS})
        return pl.DataFrame(rows)
