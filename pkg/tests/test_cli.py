import json
import math

import pytest

from ubmot import __version__
from ubmot.commands.output import render_csv, render_json
from ubmot.database import SessionLocal
from ubmot.main import main
from ubmot.schemas.sweep import SweepTable
from ubmot.services import persistence


def _read_csv(path):
    lines = path.read_text().splitlines()
    meta = [line for line in lines if line.startswith("#")]
    body = [line.split(",") for line in lines if not line.startswith("#")]
    return meta, body[0], body[1:]


def test_moments_sweep(tmp_path):
    out = tmp_path / "m.csv"
    assert main(["moments", "--N", "30", "--t", "3.6", "--k", "1..30", "--out", str(out)]) == 0
    meta, header, rows = _read_csv(out)
    assert header == ["N", "t", "k", "value", "method", "err_estimate"]
    assert len(rows) == 30
    assert float(rows[0][3]) == pytest.approx(math.exp(-1.8), rel=1e-12)
    assert any(line.startswith("# command_line=ubmot moments") for line in meta)


def test_sff_sweep(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sff", "--N", "5", "--t", "1.0", "--k", "1", "--out", str(out)]) == 0
    _, _, rows = _read_csv(out)
    assert float(rows[0][3]) == pytest.approx(-math.expm1(-1.0), rel=1e-9)


def test_json_output(tmp_path):
    out = tmp_path / "e.json"
    assert main(["edges", "--t", "2", "--format", "json", "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["columns"][:4] == ["t", "mu", "t_star", "L0"]
    assert payload["rows"][0][3] == pytest.approx(1 + math.pi / 2)


def test_unknown_flag_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["moments", "--bogus"])
    assert exc.value.code == 1


def test_domain_error_exit_code(tmp_path):
    assert main(["sff-scaled", "--mu", "0", "--t", "1", "--out", str(tmp_path / "x.csv")]) == 2


def test_output_is_reproducible_without_timestamp(tmp_path):
    out = tmp_path / "r.csv"
    argv = ["sff", "--N", "4", "--t", "0:2:5", "--k", "1..6", "--no-meta", "--out", str(out)]
    assert main(argv) == 0
    first = out.read_bytes()
    assert main(argv) == 0
    assert out.read_bytes() == first
    assert b"timestamp=" not in first
    assert b"\r\n" not in first


def test_persist_stores_the_table(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["moments", "--N", "3", "--t", "1", "--k", "1..4", "--persist", "--out", str(out)]) == 0
    db = SessionLocal()
    try:
        run = persistence.list_runs(db, command="moments", limit=1)[0]
        assert run.run_status == "COMPLETED"
        assert run.row_count == 4
        table = persistence.table_from_run(run)
        assert table.column("k") == [1, 2, 3, 4]
    finally:
        db.close()


def test_validate_writes_a_report(tmp_path):
    out = tmp_path / "v.json"
    code = main(["validate", "--suite", "closed-forms", "--out", str(out)])
    report = json.loads(out.read_text())
    assert report["suites"] == ["closed-forms"]
    assert code == (0 if report["passed"] else 1)
    assert report["checks"]


def test_renderers_share_metadata():
    table = SweepTable.from_rows(["a", "b"], [(1, 0.1), (2, float("inf"))], seed=5, extra={"N": 3})
    csv = render_csv(table, with_timestamp=False)
    assert csv.splitlines()[:3] == [f"# tool_version={__version__}", "# command_line=", "# seed=5"]
    assert csv.endswith("2,inf\n")
    payload = json.loads(render_json(table, with_timestamp=False))
    assert payload["rows"][1] == [2, "inf"]
    assert "timestamp" not in payload["metadata"]


def test_persist_records_a_failed_run(tmp_path):
    out = tmp_path / "f.csv"
    assert main(["sff-scaled", "--mu", "0", "--t", "1", "--persist", "--out", str(out)]) == 2
    db = SessionLocal()
    try:
        run = persistence.list_runs(db, command="sff-scaled", limit=1)[0]
        assert run.run_status == "FAILED"
        assert "mu" in run.error_message
        assert run.row_count == 0
    finally:
        db.close()


def test_runs_lists_and_reemits_a_stored_table(tmp_path):
    first = tmp_path / "m.csv"
    argv = ["moments", "--N", "4", "--t", "0.7", "--k", "1..3", "--persist", "--no-meta", "--out", str(first)]
    assert main(argv) == 0
    listing = tmp_path / "runs.json"
    assert main(["runs", "--command", "moments", "--limit", "1", "--format", "json", "--out", str(listing)]) == 0
    payload = json.loads(listing.read_text())
    header = payload["columns"]
    row = payload["rows"][0]
    assert row[header.index("status")] == "COMPLETED"
    assert row[header.index("rows")] == 3
    run_id = row[header.index("run_id")]

    again = tmp_path / "again.csv"
    assert main(["runs", "--show", run_id, "--no-meta", "--out", str(again)]) == 0
    _, stored_header, stored_rows = _read_csv(again)
    _, header, rows = _read_csv(first)
    assert stored_header == header
    assert [r[3] for r in stored_rows] == [r[3] for r in rows]


def test_runs_rejects_unknown_ids(tmp_path):
    assert main(["runs", "--show", "not-a-uuid", "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["runs", "--show", "00000000-0000-0000-0000-000000000000", "--out", str(tmp_path / "y.csv")]) == 2


def test_extended_flag_resums_cancelling_forms(tmp_path):
    out = tmp_path / "a.csv"
    assert main(["moments", "--N", "30", "--t", "3.6", "--k", "30", "--form", "a8a", "--out", str(out)]) == 3
    assert main(["moments", "--N", "30", "--t", "3.6", "--k", "30", "--form", "a8a", "--extended", "--out", str(out)]) == 0
    _, _, rows = _read_csv(out)
    assert rows[0][4] == "a8a-extended"
