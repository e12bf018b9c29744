from datetime import datetime

from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, JSON, String
from sqlalchemy.orm import declarative_base, relationship

Base = declarative_base()


class ExperimentRun(Base):
    __tablename__ = 'experiment_runs'

    id = Column(Integer, primary_key=True)
    manifest_hash = Column(String(12), nullable=False, index=True)
    name = Column(String(255), nullable=False)
    preset = Column(String(50))
    seed = Column(Integer)
    gamma_hat = Column(Float)
    report_path = Column(String(500))
    manifest = Column(JSON)
    created_at = Column(DateTime, default=datetime.utcnow)

    # Relationships
    slots = relationship("SlotResult", back_populates="run", cascade="all, delete-orphan")


class SlotResult(Base):
    __tablename__ = 'slot_results'

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey('experiment_runs.id'), nullable=False)
    pipeline = Column(String(100), nullable=False)  # e.g. MarkovNet fc cr2=1/16
    slot = Column(Integer, nullable=False)
    nmse_linear = Column(Float)
    nmse_db = Column(Float)
    feedback_bits = Column(Integer)
    quantizer = Column(String(20))  # fp32, mu_law6, uniform4, ...

    # Relationships
    run = relationship("ExperimentRun", back_populates="slots")
