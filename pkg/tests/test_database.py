import uuid

import pytest

from ubmot.models.sweep import SweepRecord, SweepRun
from ubmot.schemas.sweep import SweepTable
from ubmot.services import persistence


@pytest.fixture
def table():
    return SweepTable.from_rows(["k", "value"], [(1, 0.5), (2, -0.25), (3, None)], seed=9)


def test_run_lifecycle(db_session, table):
    run = persistence.start_run(db_session, "moments", "ubmot moments --N 3", seed=9)
    assert run.run_status == "PENDING"
    assert isinstance(run.run_id, uuid.UUID)

    persistence.complete_run(db_session, run, table, 0.1234)
    stored = persistence.get_run(db_session, run.run_id)
    assert stored.run_status == "COMPLETED"
    assert stored.row_count == 3
    assert stored.completed_at is not None

    restored = persistence.table_from_run(stored)
    assert restored.header == ["k", "value"]
    assert restored.column("value") == [0.5, -0.25, None]
    assert restored.metadata.seed == 9


def test_failed_run_keeps_the_message(db_session):
    run = persistence.start_run(db_session, "sff")
    persistence.fail_run(db_session, run, ValueError("boom"))
    assert persistence.get_run(db_session, run.run_id).error_message == "boom"
    assert persistence.get_run(db_session, run.run_id).run_status == "FAILED"


def test_records_are_deleted_with_their_run(db_session, table):
    run = persistence.start_run(db_session, "density")
    persistence.complete_run(db_session, run, table, 0.0)
    run_id = run.run_id
    db_session.delete(run)
    db_session.commit()
    assert db_session.query(SweepRecord).filter(SweepRecord.run_id == run_id).count() == 0
    assert db_session.query(SweepRun).filter(SweepRun.run_id == run_id).first() is None


def test_list_runs_filters_by_command(db_session):
    persistence.start_run(db_session, "edges")
    assert all(r.command == "edges" for r in persistence.list_runs(db_session, command="edges"))
