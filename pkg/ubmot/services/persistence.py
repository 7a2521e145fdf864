"""Stores emitted sweep tables as SweepRun/SweepRecord rows."""
import logging
import uuid
from datetime import datetime
from typing import List, Optional

import numpy as np
from sqlalchemy.orm import Session

from ubmot import __version__
from ubmot.models.sweep import SweepRecord, SweepRun
from ubmot.schemas.sweep import SweepTable

logger = logging.getLogger(__name__)


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    return value


def start_run(db: Session, command: str, command_line: str = "", seed: Optional[int] = None) -> SweepRun:
    run = SweepRun(
        command=command,
        command_line=command_line,
        run_status="PENDING",
        tool_version=__version__,
        seed=seed,
    )
    db.add(run)
    db.commit()
    db.refresh(run)
    logger.debug(f"sweep run created: {run.run_id}")
    return run


def complete_run(db: Session, run: SweepRun, table: SweepTable, elapsed_seconds: float) -> SweepRun:
    header = table.header
    for i, row in enumerate(table.rows()):
        run.records.append(SweepRecord(row_index=i, payload={h: _jsonable(v) for h, v in zip(header, row)}))
    run.row_count = len(table)
    run.run_status = "COMPLETED"
    run.completed_at = datetime.utcnow()
    run.computation_time_seconds = round(elapsed_seconds, 3)
    db.commit()
    db.refresh(run)
    return run


def fail_run(db: Session, run: SweepRun, error: Exception) -> SweepRun:
    run.run_status = "FAILED"
    run.completed_at = datetime.utcnow()
    run.error_message = str(error)
    db.commit()
    return run


def get_run(db: Session, run_id: uuid.UUID) -> Optional[SweepRun]:
    return db.query(SweepRun).filter(SweepRun.run_id == run_id).first()


def list_runs(db: Session, command: Optional[str] = None, limit: int = 50) -> List[SweepRun]:
    query = db.query(SweepRun)
    if command:
        query = query.filter(SweepRun.command == command)
    return query.order_by(SweepRun.created_at.desc()).limit(limit).all()


def table_from_run(run: SweepRun) -> SweepTable:
    records = sorted(run.records, key=lambda r: r.row_index)
    if not records:
        return SweepTable()
    header = list(records[0].payload.keys())
    return SweepTable.from_rows(header, [tuple(r.payload[h] for h in header) for r in records], seed=run.seed)
