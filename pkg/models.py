from datetime import datetime

from sqlalchemy import Column, DateTime, Float, Integer, String

from database import Base


class RunRecord(Base):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    task = Column(String(32), index=True, nullable=False)
    config_hash = Column(String(64), index=True, nullable=False)
    report_hash = Column(String(64), nullable=True)
    exit_status = Column(Integer, nullable=False)
    error_code = Column(String(64), nullable=True)
    elapsed_seconds = Column(Float, nullable=True)

    # directory of report.json and the CSV tables
    report_path = Column(String(1024), nullable=True)

    created_at = Column(DateTime, default=datetime.utcnow)
