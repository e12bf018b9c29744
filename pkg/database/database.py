from sqlalchemy import create_engine, text
from sqlalchemy.orm import sessionmaker

from utils.logger import setup_logger
from utils.settings import DATABASE_URL

logger = setup_logger(__name__)


def make_engine(url: str = DATABASE_URL):
    return create_engine(
        url,
        echo=False,
        connect_args={"check_same_thread": False} if url.startswith("sqlite") else {},
        pool_pre_ping=True,
    )


engine = make_engine()
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)


def get_session(bind=None):
    """Session on the configured registry, or on an explicit engine (tests use in-memory SQLite)"""
    if bind is not None:
        return sessionmaker(autocommit=False, autoflush=False, bind=bind)()
    return SessionLocal()


def init_database(bind=None):
    """Create the run registry tables if they do not exist"""
    from .models import Base
    Base.metadata.create_all(bind=bind or engine)
    logger.info("Run registry tables ready")


def check_connection(bind=None) -> bool:
    try:
        with (bind or engine).connect() as conn:
            conn.execute(text("SELECT 1"))
        return True
    except Exception as e:
        logger.error(f"Registry connection failed: {e}")
        return False
