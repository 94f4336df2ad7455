import logging

from sqlalchemy import create_engine
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import declarative_base, sessionmaker

from config import settings

logger = logging.getLogger(__name__)

connect_args = {"check_same_thread": False} if settings.database_url.startswith("sqlite") else {}
engine = create_engine(settings.database_url, connect_args=connect_args, future=True)
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine, future=True)
Base = declarative_base()


def init_db():
    # Imported lazily to avoid circular imports.
    import models  # noqa: F401

    models.Base.metadata.create_all(bind=engine)


def record_run(**fields) -> int | None:
    """Append to the run ledger; failures are logged and swallowed."""
    import models

    try:
        init_db()
    except SQLAlchemyError as exc:
        logger.warning("run ledger unavailable: %s", exc)
        return None
    db = SessionLocal()
    try:
        record = models.RunRecord(**fields)
        db.add(record)
        db.commit()
        return record.id
    except SQLAlchemyError as exc:
        db.rollback()
        logger.warning("run ledger write failed: %s", exc)
        return None
    finally:
        db.close()


def recent_runs(limit: int = 20) -> list:
    import models
    from schemas import RunRecordRead

    init_db()
    db = SessionLocal()
    try:
        rows = db.query(models.RunRecord).order_by(models.RunRecord.id.desc()).limit(limit).all()
        return [RunRecordRead.model_validate(row) for row in rows]
    finally:
        db.close()
