import csv
import io
import json

import pytest

from oscmax import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_norm_json(capsys):
    code, out, _ = run(capsys, "norm", "--fn", "abs(x-y)", "--kind", "rec_bmo", "--domain", "0,1x0,1", "--res", "64",
                       "--basis", '{"kind":"rectangles","granularity":"dyadic"}', "--split", "1,1")
    assert code == 0
    rep = json.loads(out)
    assert rep["kind"] == "rec_bmo" and rep["value"] > 0
    assert {"version", "backend", "runtime_ms"} <= set(rep["meta"])


def test_norm_csv_and_out_file(capsys, tmp_path):
    path = tmp_path / "r.csv"
    code, out, _ = run(capsys, "norm", "--fn", "x", "--domain", "0,1", "--res", "32", "--basis", "intervals",
                       "--kind", "blo", "--format", "csv", "--out", str(path))
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(path.read_text())))
    assert rows and float(rows[0]["value"]) == pytest.approx((1 - 1 / 32) / 2)


def test_catalog_function(capsys):
    code, out, _ = run(capsys, "norm", "--fn-name", "abs_diff", "--res", "16", "--no-meta")
    assert code == 0 and "meta" not in json.loads(out)


def test_maximal_dump(capsys):
    code, out, _ = run(capsys, "maximal", "--fn", "x", "--domain", "0,1", "--res", "8", "--basis", "intervals")
    assert code == 0
    g = json.loads(out)
    assert g["res"] == [8] and max(g["values"]) == pytest.approx(15 / 16)


def test_dump_round_trip(capsys):
    code, out, _ = run(capsys, "dump", "--fn", "x*y", "--res", "4", "--no-meta")
    assert code == 0 and len(json.loads(out)["values"]) == 16


def test_engulf_witness_fails(capsys):
    code, out, _ = run(capsys, "engulf", "--basis", '{"kind":"rectangles"}', "--witness-H", "16", "--no-meta")
    rep = json.loads(out)
    assert code == 1 and rep["passed"] is False
    assert rep["witness"][-1]["H"] == 16 and rep["witness"][-1]["ratio"] >= 16


def test_engulf_cubes_pass(capsys):
    code, out, _ = run(capsys, "engulf", "--basis", "cubes", "--res", "10", "--no-meta")
    assert code == 0 and json.loads(out)["passed"]


def test_verify_random_suite(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "--check", "blo_in_bmo", "--random", "3", "--res", "8", "--seed", "1",
                       "--no-meta", "--failures-dir", str(tmp_path))
    assert code == 0
    reps = json.loads(out)
    reps = reps["reports"] if isinstance(reps, dict) else reps
    assert len(reps) == 3 and all(r["passed"] for r in reps)
    assert not list(tmp_path.iterdir())


def test_verify_manifest(capsys, tmp_path):
    m = tmp_path / "m.json"
    m.write_text(json.dumps([{"check": "jensen", "domain": "0,1", "res": 16, "f": "x^2", "basis": "intervals"}]))
    code, out, _ = run(capsys, "verify", "--manifest", str(m), "--no-meta")
    assert code == 0


@pytest.mark.parametrize("argv", [
    ["norm", "--fn", "x + * y", "--res", "4"],
    ["norm", "--fn", "x", "--res", "4", "--basis", '{"kind":"blobs"}'],
    ["norm", "--fn", "x", "--res", "4", "--kind", "rec_bmo"],
    ["norm", "--fn=-log(abs(x-y))", "--res", "4"],
    ["norm", "--fn", "x", "--res", "4", "--domain", "1,0x0,1"],
    ["norm", "--fn", "x", "--res", "4", "--threads", "0"],
    ["verify", "--manifest", "/nonexistent/m.json"],
])
def test_config_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err.startswith("error:")


def test_syntax_error_names_offset(capsys):
    _, _, err = run(capsys, "norm", "--fn", "x + * y", "--res", "4")
    assert "byte 4" in err


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["norm", "--format", "xml"])
    assert exc.value.code == 2


@pytest.mark.parametrize("cmd", ["norm", "maximal", "verify", "engulf", "reproduce", "dump"])
def test_help(capsys, cmd):
    with pytest.raises(SystemExit) as exc:
        cli.main([cmd, "--help"])
    assert exc.value.code == 0
    assert len(capsys.readouterr().out) > 200


def test_reproduce_is_byte_identical(capsys):
    a = run(capsys, "reproduce", "--res", "64", "--no-meta")
    b = run(capsys, "reproduce", "--res", "64", "--no-meta")
    assert a[1] == b[1] and a[1]
