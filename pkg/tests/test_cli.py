import csv
import io
import json

import pytest

import oracles
from polaron import cli
from polaron.binding import VerificationInputs, eps_bind
from polaron.config import parse_config
from polaron.errors import NoConvergence

SMALL_BP = ["--bp-nr", "48", "--bp-nu", "8"]
SMALL_MC = ["--period", "16", "--slices", "128", "--sweeps", "4000"]


def run(argv, tmp_path):
    code = cli.main([*argv, "--out", str(tmp_path)])
    return code


def result(tmp_path, task):
    files = sorted(p for p in tmp_path.glob(f"{task}-*.json") if ".manifest" not in p.name)
    assert len(files) == 1, files
    return json.loads(files[0].read_text()), files[0]


def manifests(tmp_path):
    return sorted(tmp_path.glob("*.manifest.json"))


# -- tasks -----------------------------------------------------------------------

def test_pekar_default(tmp_path, capsys):
    assert run(["pekar", "--alpha", "1"], tmp_path) == 0
    doc, _ = result(tmp_path, "pekar")
    assert doc["energy"] == pytest.approx(-oracles.C_P_QUOTED, rel=0.01)
    assert doc["task"] == "pekar" and doc["params"] == {"alpha": 1.0, "u": 0.0, "n": 1}
    assert set(doc["components"]) == {"kinetic", "attraction"}
    assert doc["convergence"]["residual"] <= 1e-8
    assert doc["meta"]["version"]
    out = capsys.readouterr()
    assert json.loads(out.out) == doc
    assert "C_P" in out.err
    m = json.loads(manifests(tmp_path)[0].read_text())
    assert m["exit_code"] == 0 and m["results"]["json"].endswith(".json")


def test_pekar_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    argv = ["pekar", "--alpha", "2", "--grid-n", "400"]
    assert run(argv, a) == 0 and run(argv, b) == 0
    assert result(a, "pekar")[1].read_bytes() == result(b, "pekar")[1].read_bytes()


def test_invalid_input_exit_2(tmp_path, capsys):
    assert run(["pekar", "--alpha", "-1"], tmp_path) == 2
    assert "alpha" in capsys.readouterr().err
    assert not list(tmp_path.glob("pekar-*.json"))


def test_missing_config_file_exit_2(tmp_path):
    assert run(["pekar", "--config", str(tmp_path / "nope.cfg")], tmp_path) == 2


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("task = pekar\nalpha = 3\ngrid_n = 300\n")
    assert run(["pekar", "--config", str(cfg), "--alpha", "0.5"], tmp_path) == 0
    doc, _ = result(tmp_path, "pekar")
    assert doc["params"]["alpha"] == 0.5
    assert doc["meta"]["grid"]["n_points"] == 300


def test_no_convergence_exit_1(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NoConvergence("stalled", diagnostics={"residual": 1.0})

    monkeypatch.setattr(cli, "solve_pekar", boom)
    assert run(["pekar", "--alpha", "1"], tmp_path) == 1
    m = json.loads(manifests(tmp_path)[0].read_text())
    assert m["exit_code"] == 1 and m["diagnostics"] == {"residual": 1.0}


def test_bipolaron_small_grid(tmp_path):
    argv = ["bipolaron", "--alpha", "1", "--u", "1", *SMALL_BP]
    assert run(argv, tmp_path / "a") == 0
    assert run(argv, tmp_path / "b") == 0
    doc, path = result(tmp_path / "a", "bipolaron")
    assert doc["params"]["n"] == 2
    assert set(doc["components"]) == {"kinetic", "attraction", "repulsion"}
    b = doc["meta"]["binding"]
    assert b["delta_e"] == pytest.approx(2 * b["e1"] - doc["energy"], abs=1e-15)
    assert path.read_bytes() == result(tmp_path / "b", "bipolaron")[1].read_bytes()


def test_pimc_oscillator_mode(tmp_path):
    assert run(["pimc", "--external-v", "1", *SMALL_MC, "--sweeps", "20000", "--seed", "2"], tmp_path) == 0
    doc, _ = result(tmp_path, "pimc")
    assert doc["meta"]["mode"] == "oscillator"
    assert abs(doc["energy"] - oracles.OSCILLATOR_ENERGY) <= 2 * doc["stderr"]


def test_pimc_same_seed_same_stream(tmp_path):
    argv = ["pimc", "--alpha", "0.5", *SMALL_MC, "--sweeps", "8000", "--seed", "5", "--trace"]
    assert run(argv, tmp_path / "a") == 0
    assert run(argv, tmp_path / "b") == 0
    da, pa = result(tmp_path / "a", "pimc")
    db, pb = result(tmp_path / "b", "pimc")
    assert pa.read_bytes() == pb.read_bytes()
    assert "stderr" in da and len(da["meta"]["schedule"]) == 8
    traces = list((tmp_path / "a").glob("*.trace.csv"))
    assert len(traces) == 1


def test_scan_binding_csv(tmp_path):
    argv = ["scan-binding", "--alpha", "1", "--u-min", "0", "--u-max", "5", "--u-steps", "3", *SMALL_BP]
    assert run(argv, tmp_path) == 0
    (path,) = tmp_path.glob("scan-binding-*.csv")
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["U"]) for r in rows] == [0.0, 2.5, 5.0]
    margin = [float(r["delta_e"]) - eps_bind(1.0) for r in rows]
    assert margin[0] > 0 and margin[-1] <= 0
    for r in rows:
        assert float(r["e2"]) <= 2 * float(r["e1"]) + 1e-6


def test_verify_failure_exit_3(tmp_path, monkeypatch):
    class Est:
        alpha, energy, stderr = 0.25, -0.1, 0.001

    monkeypatch.setattr(cli, "default_suite", lambda quick=False: VerificationInputs(pimc_single=[Est()]))
    assert run(["verify", "--suite", "quick"], tmp_path) == 3
    doc, _ = result(tmp_path, "verify")
    assert doc["passed"] is False
    assert doc["checks"][0]["name"].startswith("(a)")


# -- report ------------------------------------------------------------------------

def test_report_two_runs(tmp_path):
    out = tmp_path / "runs"
    assert run(["pekar", "--alpha", "1", "--grid-n", "200"], out) == 0
    assert run(["pekar", "--alpha", "2", "--grid-n", "200"], out) == 0
    buf = io.StringIO()
    assert cli.run_task(parse_config("task=report", {"dir": str(out)}), buf) == 0
    doc = json.loads(buf.getvalue())
    assert len(doc) == 2
    assert list(doc) == sorted(doc)
    assert json.loads((out / "report.json").read_text()) == doc


def test_report_duplicate_latest_wins(tmp_path):
    out = tmp_path / "runs"
    for _ in range(2):
        assert run(["pekar", "--alpha", "1", "--grid-n", "200"], out) == 0
    doc = cli.emit_report(out)
    (entry,) = doc.values()
    assert len(entry["history"]) == 2
    assert entry["latest"]["finished"] == max(h["finished"] for h in entry["history"])


def test_report_empty_directory(tmp_path, capsys):
    assert cli.main(["report", "--dir", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out) == {}


def test_report_missing_directory(tmp_path):
    assert cli.main(["report", "--dir", str(tmp_path / "absent")]) == 2


def test_report_corrupt_manifest_named(tmp_path, capsys):
    (tmp_path / "pekar-x-1.manifest.json").write_text("{not json")
    assert cli.main(["report", "--dir", str(tmp_path)]) == 2
    assert "pekar-x-1.manifest.json" in capsys.readouterr().err


# -- plumbing ----------------------------------------------------------------------

def test_atomic_write_leaves_no_temp_files(tmp_path):
    cli.atomic_write(tmp_path / "sub" / "f.json", "{}\n")
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["f.json"]


@pytest.mark.parametrize("raw,expected", [("1", 1), ("0", 1), ("junk", 1), ("-3", 1)])
def test_worker_count(monkeypatch, raw, expected):
    monkeypatch.setenv("POLARON_THREADS", raw)
    assert cli.worker_count() == expected


def test_rerun_after_deleting_output(tmp_path):
    argv = ["pekar", "--alpha", "1", "--grid-n", "200"]
    assert run(argv, tmp_path / "o") == 0
    first = result(tmp_path / "o", "pekar")[1].read_bytes()
    for p in (tmp_path / "o").iterdir():
        p.unlink()
    (tmp_path / "o").rmdir()
    assert run(argv, tmp_path / "o") == 0
    assert result(tmp_path / "o", "pekar")[1].read_bytes() == first


@pytest.mark.slow
def test_verify_default_suite(tmp_path):
    assert run(["verify"], tmp_path) == 0
    doc, _ = result(tmp_path, "verify")
    assert doc["passed"] and all(c["passed"] for c in doc["checks"])
    names = " ".join(c["name"] for c in doc["checks"])
    for tag in ("(a)", "(b)", "(c)", "(d)"):
        assert tag in names
