import uuid
from datetime import datetime

from sqlalchemy import Column, DateTime, ForeignKey, Integer, JSON, Numeric, String, Text, Uuid
from sqlalchemy.orm import relationship

from ubmot.database import Base


class SweepRun(Base):
    __tablename__ = 'sweep_runs'

    run_id = Column(Uuid, primary_key=True, default=uuid.uuid4)
    command = Column(String(50), nullable=False)
    command_line = Column(Text)
    run_status = Column(String(50), default='PENDING')  # PENDING, COMPLETED, FAILED
    tool_version = Column(String(20))
    seed = Column(Integer)
    row_count = Column(Integer, default=0)
    created_at = Column(DateTime, default=datetime.utcnow)
    completed_at = Column(DateTime)
    computation_time_seconds = Column(Numeric(10, 3))
    error_message = Column(Text)

    # Relationships
    records = relationship("SweepRecord", back_populates="run", cascade="all, delete-orphan")


class SweepRecord(Base):
    __tablename__ = 'sweep_records'

    record_id = Column(Uuid, primary_key=True, default=uuid.uuid4)
    run_id = Column(Uuid, ForeignKey('sweep_runs.run_id'), nullable=False)
    row_index = Column(Integer, nullable=False)
    payload = Column(JSON, nullable=False)  # header -> value for one table row
    created_at = Column(DateTime, default=datetime.utcnow)

    # Relationships
    run = relationship("SweepRun", back_populates="records")
