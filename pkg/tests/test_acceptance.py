"""End-to-end acceptance criteria, one test each, printing one PASS/FAIL line per criterion."""

import csv
import json
import time

import pytest

import oracles
from polaron import cli
from polaron.binding import SUBADDITIVITY_TOL, PTSolver, binding_energy, find_critical_ratio, radius_profile
from polaron.pekar import default_grid, solve_pekar

pytestmark = pytest.mark.acceptance


def verdict(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def cli_run(out, *argv):
    t0 = time.perf_counter()
    code = cli.main([*argv, "--out", str(out)])
    elapsed = time.perf_counter() - t0
    assert code == 0, (argv, code)
    (path,) = [p for p in out.glob(f"{argv[0]}-*.json") if ".manifest" not in p.name]
    return json.loads(path.read_text()), path, elapsed


def csv_rows(out):
    (path,) = out.glob("scan-binding-*.csv")
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def critical_runs(tmp_path_factory):
    runs = {}
    for alpha in ("1", "2"):
        out = tmp_path_factory.mktemp(f"crit{alpha}")
        doc, _, _ = cli_run(out, "scan-binding", "--alpha", alpha, "--find-critical", "--tol", "0.01")
        runs[alpha] = (doc, csv_rows(out))
    return runs


def test_criterion_01_pekar_constant(tmp_path, capsys):
    doc, _, sec = cli_run(tmp_path, "pekar", "--alpha", "1")
    e = doc["energy"]
    ok = abs(e + oracles.C_P_QUOTED) <= 0.01 * oracles.C_P_QUOTED and sec <= 60
    verdict(capsys, 1, ok, f"E={e:.7f} vs -0.109 (1%), {sec:.1f} s")


def test_criterion_02_virial_and_scaling(capsys):
    t0 = time.perf_counter()
    g = default_grid()
    res = {b: solve_pekar(b, g) for b in (0.5, 1.0, 2.0, 4.0)}
    sec = time.perf_counter() - t0
    virial = max(abs(r.kinetic + r.energy) / abs(r.energy) for r in res.values())
    ratios = [r.energy / b**2 for b, r in res.items()]
    spread = (max(ratios) - min(ratios)) / abs(ratios[0])
    ok = virial <= 1e-3 and spread <= 1e-6 and sec <= 180
    verdict(capsys, 2, ok, f"virial {virial:.2e} (<=1e-3), E/beta^2 spread {spread:.2e} (<=1e-6), {sec:.1f} s")


def test_criterion_03_gaussian_dominance(capsys):
    e = solve_pekar(1.0).energy
    ok = e <= oracles.GAUSSIAN_TRIAL_ENERGY
    verdict(capsys, 3, ok, f"E={e:.7f} <= {oracles.GAUSSIAN_TRIAL_ENERGY:.7f}")


def test_criterion_04_bipolaron_u0(tmp_path, capsys):
    doc, _, sec = cli_run(tmp_path, "bipolaron", "--alpha", "1", "--u", "0")
    e = doc["energy"]
    ref = 2 * solve_pekar(2.0).energy
    ok = abs(e - ref) <= 0.01 * abs(ref) and abs(e + 8 * oracles.C_P_QUOTED) <= 0.01 * 8 * oracles.C_P_QUOTED
    ok = ok and sec <= 600
    verdict(capsys, 4, ok, f"E={e:.7f} vs 2 E_P(2)={ref:.7f} and -8 C_P (1%), {sec:.1f} s")


def test_criterion_05_scaling_collapse(tmp_path, capsys):
    a, _, _ = cli_run(tmp_path / "a", "bipolaron", "--alpha", "1", "--u", "1.5")
    b, _, _ = cli_run(tmp_path / "b", "bipolaron", "--alpha", "2", "--u", "3")
    da, db = a["meta"]["binding"]["delta_e"], b["meta"]["binding"]["delta_e"]
    rel = abs(db - 4 * da) / abs(4 * da)
    verdict(capsys, 5, rel <= 1e-4, f"delta_e(2,3)={db:.8f}, 4 delta_e(1,1.5)={4 * da:.8f}, rel {rel:.1e}")


def test_criterion_06_unbinding(tmp_path, capsys):
    doc, _, _ = cli_run(tmp_path, "bipolaron", "--alpha", "1", "--u", "50")
    de = doc["meta"]["binding"]["delta_e"]
    verdict(capsys, 6, abs(de) <= 1e-3, f"|delta_e|={abs(de):.2e} (<=1e-3)")


def test_criterion_07_critical_ratio(critical_runs, capsys):
    n1 = critical_runs["1"][0]["meta"]["nu_c"]
    n2 = critical_runs["2"][0]["meta"]["nu_c"]
    ok = 2 < n1 < 10 and 2 < n2 < 10 and abs(n1 - n2) <= 0.01
    verdict(capsys, 7, ok, f"nu_c(alpha=1)={n1:.4f}, nu_c(alpha=2)={n2:.4f}")


def test_criterion_08_radius_jump(critical_runs, capsys):
    solver = PTSolver()
    lo, hi = critical_runs["1"][0]["meta"]["bracket"]
    fine = find_critical_ratio(1.0, 1e-4, solver=solver, nu_low=lo, nu_high=hi)
    nu = fine.bracket[0]
    rows = radius_profile(1.0, [0.9 * nu, 0.99 * nu, 0.999 * nu], solver=solver)
    radii = [r.inv_r12 for r in rows]
    fh = max(r.fh_rel_error for r in rows)
    ok = not any(r.unbound for r in rows) and min(radii) >= 0.5 * radii[0] and fh <= 1e-3
    verdict(capsys, 8, ok, "inv_r12 " + ", ".join(f"{x:.5f}" for x in radii) + f"; FH {fh:.1e} (<=1e-3)")


def test_criterion_09_pimc_brackets(tmp_path, capsys):
    lo, hi = oracles.weak_coupling_bracket(0.5)
    half, _, s_half = cli_run(tmp_path / "a", "pimc", "--alpha", "0.5")
    e, s = half["energy"], half["stderr"]
    ok_half = lo - 2 * s <= e <= hi + 2 * s
    one, _, s_one = cli_run(tmp_path / "b", "pimc", "--alpha", "1")
    e1, s1 = one["energy"], one["stderr"]
    ok_one = e1 <= -1 + 2 * s1 and e1 <= -oracles.C_P_QUOTED + 2 * s1
    ok = ok_half and ok_one and max(s_half, s_one) <= 900
    verdict(capsys, 9, ok, f"E(0.5)={e:.4f}+-{s:.4f} in [{lo:.4f}, {hi:.4f}]; "
                           f"E(1)={e1:.4f}+-{s1:.4f} <= -1; {s_half:.0f} s, {s_one:.0f} s")


def test_criterion_10_pimc_below_pt(tmp_path, capsys):
    doc, _, _ = cli_run(tmp_path, "pimc", "--alpha", "1", "--n", "2", "--u", "0.5", "--sweeps", "16000")
    e, s = doc["energy"], doc["stderr"]
    e_pt = binding_energy(1.0, 0.5).e2
    verdict(capsys, 10, e <= e_pt + 2 * s, f"E_pimc={e:.4f}+-{s:.4f} <= E_PT={e_pt:.4f}")


def test_criterion_11_oscillator(tmp_path, capsys):
    doc, _, _ = cli_run(tmp_path, "pimc", "--external-v", "1")
    e, s = doc["energy"], doc["stderr"]
    ok = abs(e - oracles.OSCILLATOR_ENERGY) <= 2 * s
    verdict(capsys, 11, ok, f"E={e:.4f}+-{s:.4f} vs 3")


def test_criterion_12_subadditivity(critical_runs, tmp_path, capsys):
    _, _, _ = cli_run(tmp_path, "scan-binding", "--alpha", "1", "--u-min", "0", "--u-max", "5", "--u-steps", "11")
    rows = csv_rows(tmp_path) + critical_runs["1"][1] + critical_runs["2"][1]
    worst = max(float(r["e2"]) - 2 * float(r["e1"]) for r in rows)
    ok = worst <= SUBADDITIVITY_TOL
    verdict(capsys, 12, ok, f"{len(rows)} rows, max e2 - 2 e1 = {worst:.2e} (<=1e-6)")


def test_criterion_13_determinism(tmp_path, capsys):
    same = []
    for argv in (["pekar", "--alpha", "1"],
                 ["bipolaron", "--alpha", "1", "--u", "1"],
                 ["pimc", "--alpha", "0.5", "--period", "16", "--slices", "128", "--sweeps", "8000",
                  "--seed", "11", "--trace"]):
        a, b = tmp_path / f"{argv[0]}-a", tmp_path / f"{argv[0]}-b"
        _, pa, _ = cli_run(a, *argv)
        _, pb, _ = cli_run(b, *argv)
        files_a = sorted(p for p in a.iterdir() if ".manifest" not in p.name)
        files_b = sorted(p for p in b.iterdir() if ".manifest" not in p.name)
        same.append([p.name for p in files_a] == [p.name for p in files_b]
                    and all(x.read_bytes() == y.read_bytes() for x, y in zip(files_a, files_b)))
    verdict(capsys, 13, all(same), "byte-identical pekar, bipolaron, pimc (json + trace): "
                                   + ", ".join(str(x) for x in same))
