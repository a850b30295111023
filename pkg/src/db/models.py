from sqlalchemy import Column, Integer, String, DateTime, Boolean, func
from sqlalchemy.orm import declarative_base

Base = declarative_base()


class RunHistory(Base):
    __tablename__ = "run_history"

    id = Column(Integer, primary_key=True, autoincrement=True)
    command = Column(String, nullable=False)
    scenario_path = Column(String)
    run_start = Column(DateTime(timezone=True), default=func.now(), nullable=False)
    run_stop = Column(DateTime(timezone=True), default=func.now())
    exit_code = Column(Integer)
    success = Column(Boolean, default=False)
    error_message = Column(String)
