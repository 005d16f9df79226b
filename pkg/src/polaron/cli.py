"""Command-line entry point: ``polaron <task> [options]``.

Machine-readable results go to files in the output directory (and the main
JSON document to standard output); human-readable summaries go to standard
error.  Exit codes: 0 success, 1 solver did not converge, 2 invalid input,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .binding import (
    PTSolver,
    VerificationInputs,
    find_critical_ratio,
    scan_binding,
    verify_bounds,
    write_scan_csv,
)
from .bipolaron import ScfOptions, build_internal_grid
from .config import RunConfig, config_hash, emit_config, parse_config
from .errors import (
    BracketFailure,
    ConfigError,
    DegenerateInput,
    GridMismatch,
    InvalidArgument,
    NoConvergence,
    ReportError,
    UnsupportedN,
)
from .pekar import PekarOptions, solve_pekar
from .radial import build_radial_grid

log = logging.getLogger("polaron")

EXIT_OK, EXIT_NO_CONVERGENCE, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2, 3


def worker_count() -> int:
    raw = os.environ.get("POLARON_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, min(n, os.cpu_count() or 1))


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _clean(x):
    """Plain-JSON view of numpy scalars and arrays."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _document(task, cfg, energy, components, convergence, meta, stderr=None, n=None, **extra):
    doc = {
        "task": task,
        "params": {"alpha": cfg.alpha, "u": cfg.u, "n": cfg.n if n is None else n},
        "energy": energy,
        "components": components,
        "convergence": convergence,
        "meta": {"version": __version__, **meta},
    }
    if stderr is not None:
        doc["stderr"] = stderr
    doc.update(extra)
    return _clean(doc)


# ---------------------------------------------------------------------------
# tasks


def _run_pekar(cfg: RunConfig):
    grid = build_radial_grid(cfg.grid_rmax, cfg.grid_n)
    res = solve_pekar(cfg.alpha, grid, PekarOptions(tol=cfg.task_tol()))
    virial = abs(res.kinetic + res.energy) / abs(res.energy)
    doc = _document(
        "pekar", cfg, res.energy,
        {"kinetic": res.kinetic, "attraction": cfg.alpha * res.attraction},
        {"iterations": res.iterations, "residual": res.residual},
        {"grid": {"n_points": cfg.grid_n, "r_max_scaled": cfg.grid_rmax},
         "pekar_constant": -res.energy / cfg.alpha**2, "virial_error": virial},
        n=1,
    )
    print(f"pekar alpha={cfg.alpha:g}: E={res.energy:.10f} (C_P={-res.energy / cfg.alpha**2:.6f})",
          file=sys.stderr)
    return doc, {}


def _pt_solver(cfg: RunConfig) -> PTSolver:
    grid = build_internal_grid(cfg.bp_rmax, cfg.bp_nr, cfg.bp_nu)
    tol = cfg.task_tol() if cfg.task == "bipolaron" else 1e-8
    return PTSolver(grid, ScfOptions(tol=tol), PekarOptions(tol=1e-10))


def _run_bipolaron(cfg: RunConfig):
    solver = _pt_solver(cfg)
    rep = solver.report(cfg.alpha, cfg.u)
    res = solver.pair_unit(cfg.u / cfg.alpha)
    a2 = cfg.alpha**2
    doc = _document(
        "bipolaron", cfg, rep.e2,
        {"kinetic": a2 * res.kinetic, "attraction": a2 * res.attraction,
         "repulsion": cfg.u * rep.inv_r12},
        {"iterations": res.scf_iterations, "residual": a2 * cfg.alpha * res.scf_residual},
        {"grid": {"n_r": cfg.bp_nr, "n_u": cfg.bp_nu, "r_max_scaled": cfg.bp_rmax},
         "binding": {"e1": rep.e1, "e2_radial": rep.e2_radial, "delta_e": rep.delta_e,
                     "inv_r12": rep.inv_r12, "unbound": rep.unbound},
         "note": "energy = min(radial-state energy, 2 e1); components refer to the radial state"},
        n=2,
    )
    print(f"bipolaron alpha={cfg.alpha:g} U={cfg.u:g}: E={rep.e2:.10f} delta_e={rep.delta_e:.3e}"
          f"{' (unbound)' if rep.unbound else ''}", file=sys.stderr)
    return doc, {}


def _run_pimc(cfg: RunConfig, out: Path, stem: str):
    from .pimc import ChainOptions, estimate_energy, oscillator_energy, sample_paths

    files = {}
    if cfg.external_v > 0:
        ens = sample_paths(0.0, 0.0, cfg.n, cfg.period, cfg.slices, cfg.sweeps, cfg.seed,
                           external_v=cfg.external_v)
        osc = oscillator_energy(ens)
        ch = ens.statistics["chain"]
        doc = _document(
            "pimc", cfg, osc["virial"],
            {"potential": osc["virial"] / 2, "primitive_estimate": osc["primitive"],
             "primitive_stderr": osc["primitive_stderr"], "lattice_virial": osc["virial_lattice"],
             "discretization_correction": osc["correction"]},
            {"iterations": cfg.sweeps, "residual": None},
            {"seed": cfg.seed, "grid": None, "mode": "oscillator", "external_v": cfg.external_v,
             "period": cfg.period, "slices": cfg.slices, "acceptance": ch.acceptance,
             "exact": 3.0 * math.sqrt(cfg.external_v) * cfg.n},
            stderr=osc["virial_stderr"], n=cfg.n,
        )
        print(f"oscillator v={cfg.external_v:g}: E={osc['virial']:.5f} +- {osc['virial_stderr']:.5f}",
              file=sys.stderr)
        return doc, files
    trace = out / f"{stem}.trace.csv" if cfg.trace else None
    est = estimate_energy(cfg.alpha, cfg.u, cfg.n, cfg.schedule_values(), cfg.period, cfg.slices,
                          cfg.sweeps, cfg.seed, ChainOptions(), trace_path=trace, workers=worker_count())
    if trace is not None:
        files["trace"] = str(trace)
    doc = _document(
        "pimc", cfg, est.energy,
        {"action_per_time": est.integrand, "action_per_time_stderr": est.integrand_err},
        {"iterations": cfg.sweeps, "residual": None},
        {"seed": cfg.seed, "grid": None, "schedule": est.schedule, "weights": est.weights,
         "period": cfg.period, "slices": cfg.slices, "short_time_correction": est.correction,
         "raw_action_per_time": est.raw_action, "quadrature_error": est.quadrature_error,
         "diagnostics": {k: v for k, v in est.diagnostics.items() if k != "seconds"}},
        stderr=est.stderr, n=cfg.n,
    )
    flag = " (insufficient statistics)" if est.insufficient_statistics else ""
    print(f"pimc alpha={cfg.alpha:g} U={cfg.u:g} N={cfg.n}: E={est.energy:.5f} +- {est.stderr:.5f}{flag}",
          file=sys.stderr)
    return doc, files


def _scan_rows_parallel(cfg: RunConfig, solver: PTSolver, us):
    workers = worker_count()
    if workers == 1 or len(us) == 1:
        return scan_binding(cfg.alpha, us, solver).rows
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(_scan_one, [(cfg, float(u)) for u in us]))
    return sorted(rows, key=lambda r: r.u)


def _scan_one(job):
    cfg, u = job
    return _pt_solver(cfg).report(cfg.alpha, u)


def _run_scan(cfg: RunConfig, out: Path, stem: str):
    solver = _pt_solver(cfg)
    files = {}
    if cfg.find_critical:
        scan = find_critical_ratio(cfg.alpha, cfg.task_tol(), solver)
        rows = scan.rows
        summary = {"nu_c": scan.nu_c, "bracket": list(scan.bracket), "tolerance": scan.tolerance}
        print(f"critical ratio alpha={cfg.alpha:g}: nu_c={scan.nu_c:.6f} "
              f"(U in [{scan.bracket[0]:.6f}, {scan.bracket[1]:.6f}])", file=sys.stderr)
    else:
        us = np.linspace(cfg.u_min, cfg.u_max, cfg.u_steps)
        rows = _scan_rows_parallel(cfg, solver, us)
        summary = {}
    csv_path = out / f"{stem}.csv"
    write_scan_csv(csv_path, rows)
    files["csv"] = str(csv_path)
    doc = _document(
        "scan-binding", cfg, None, {}, {"iterations": len(rows), "residual": None},
        {"grid": {"n_r": cfg.bp_nr, "n_u": cfg.bp_nu, "r_max_scaled": cfg.bp_rmax}, **summary},
        n=2, rows=[r.csv_row() for r in rows],
    )
    return doc, files


def default_suite(quick: bool = False):
    """Inputs for verify_bounds: PT energies, a binding scan around nu_c, and PIMC estimates."""
    from .pimc import estimate_energy

    solver = PTSolver()
    pt_single = {a: a * a * solver.e1_unit for a in (1.0, 2.0)}
    crit = find_critical_ratio(1.0, 0.01, solver)
    rows = list(crit.rows)
    for u in (0.0, 1.0, 2.0, 1.1 * crit.bracket[1], 5.0):
        rows.append(solver.report(1.0, u))
    rows.append(solver.report(2.0, 3.0))
    pimc = []
    if not quick:
        workers = worker_count()
        for a in (0.25, 0.5, 1.0, 2.0):
            pimc.append(estimate_energy(a, sweeps=16_000, seed=7, workers=workers))
    return VerificationInputs(pimc_single=pimc, pt_single=pt_single, rows=rows, nu_c=crit.nu_c)


def _run_verify(cfg: RunConfig):
    inputs = default_suite(quick=cfg.suite == "quick")
    report = verify_bounds(inputs)
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}", file=sys.stderr)
    doc = _document(
        "verify", cfg, None, {}, {"iterations": len(report.checks), "residual": None},
        {"suite": cfg.suite, "nu_c": inputs.nu_c},
        n=1, checks=[asdict(c) for c in report.checks], passed=report.passed,
    )
    return doc, {}


def emit_report(directory) -> dict:
    """Aggregate every manifest under ``directory``, keyed by config hash.

    For repeated configs the most recent run is the entry and all runs are
    listed under ``history``.
    """
    d = Path(directory)
    if not d.is_dir():
        raise ReportError(f"no such directory: {d}")
    runs: dict[str, list[dict]] = {}
    for path in sorted(d.glob("*.manifest.json")):
        try:
            m = json.loads(path.read_text())
            key = m["config_hash"]
            m["finished"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ReportError(f"corrupt manifest {path.name}: {exc}") from None
        m["_file"] = path.name
        runs.setdefault(key, []).append(m)
    doc = {}
    for key in sorted(runs):
        ms = sorted(runs[key], key=lambda m: (m["finished"], m["_file"]))
        latest = dict(ms[-1])
        history = [{"finished": m["finished"], "manifest": m.pop("_file")} for m in ms]
        latest.pop("_file", None)
        doc[key] = {"latest": latest, "history": history}
    return doc


def _manifest(cfg, key, started, finished, files, status, diagnostics):
    return {
        "config": emit_config(cfg),
        "config_hash": key,
        "version": __version__,
        "started": started,
        "finished": finished,
        "input_hashes": {"config": key},
        "results": files,
        "exit_code": status,
        "diagnostics": _clean(diagnostics),
    }


def _iso(t: float) -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(t)) + f".{int(t * 1e6) % 1_000_000:06d}Z"


def run_task(cfg: RunConfig, stdout=None) -> int:
    """Run one configured task, persist results and manifest, return the exit code."""
    stdout = stdout or sys.stdout
    out = Path(cfg.out)
    if cfg.task == "report":
        try:
            doc = emit_report(cfg.dir)
        except ReportError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
        text = _dumps(doc)
        atomic_write(Path(cfg.dir) / "report.json", text)
        stdout.write(text)
        return EXIT_OK

    key = config_hash(cfg)
    stem = f"{cfg.task}-{key}"
    started = time.time()
    files: dict[str, str] = {}
    diagnostics: dict = {}
    status = EXIT_OK
    try:
        if cfg.task == "pekar":
            doc, extra = _run_pekar(cfg)
        elif cfg.task == "bipolaron":
            doc, extra = _run_bipolaron(cfg)
        elif cfg.task == "pimc":
            doc, extra = _run_pimc(cfg, out, stem)
        elif cfg.task == "scan-binding":
            doc, extra = _run_scan(cfg, out, stem)
        else:
            doc, extra = _run_verify(cfg)
            if not doc["passed"]:
                status = EXIT_VERIFY
        files.update(extra)
        diagnostics = doc.get("convergence", {})
    except (NoConvergence, BracketFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        diagnostics = getattr(exc, "diagnostics", {})
        doc = None
        status = EXIT_NO_CONVERGENCE
    except (InvalidArgument, DegenerateInput, GridMismatch, UnsupportedN, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        doc = None
        status = EXIT_INVALID
    if doc is not None:
        text = _dumps(doc)
        path = out / f"{stem}.json"
        atomic_write(path, text)
        files["json"] = str(path)
        stdout.write(text)
    finished = time.time()
    manifest = _manifest(cfg, key, _iso(started), _iso(finished), files, status, diagnostics)
    atomic_write(out / f"{stem}-{int(finished * 1e6)}.manifest.json", _dumps(manifest))
    return status


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polaron", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="task", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value file; flags override it")
        sp.add_argument("--out", help="output directory (default: results)")
        sp.add_argument("--format", choices=["json", "csv"])
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("pekar", help="single polaron, Pekar functional")
    common(sp)
    sp.add_argument("--alpha")
    sp.add_argument("--grid-n")
    sp.add_argument("--grid-rmax")
    sp.add_argument("--tol")

    sp = sub.add_parser("bipolaron", help="two polarons, Pekar-Tomasevich functional")
    common(sp)
    sp.add_argument("--alpha")
    sp.add_argument("--u")
    sp.add_argument("--tol")
    sp.add_argument("--bp-nr")
    sp.add_argument("--bp-nu")
    sp.add_argument("--bp-rmax")

    sp = sub.add_parser("pimc", help="path-integral Monte Carlo ground energy")
    common(sp)
    sp.add_argument("--alpha")
    sp.add_argument("--u")
    sp.add_argument("--n")
    sp.add_argument("--period")
    sp.add_argument("--slices")
    sp.add_argument("--sweeps")
    sp.add_argument("--seed")
    sp.add_argument("--schedule", help="comma-separated couplings from 0 to alpha")
    sp.add_argument("--external-v", help="oscillator validation mode: alpha = 0 plus v|x|^2")
    sp.add_argument("--trace", action="store_const", const="true", help="dump per-block traces as CSV")

    sp = sub.add_parser("scan-binding", help="PT binding energies over U, or the critical ratio")
    common(sp)
    sp.add_argument("--alpha")
    sp.add_argument("--u-min")
    sp.add_argument("--u-max")
    sp.add_argument("--u-steps")
    sp.add_argument("--find-critical", action="store_const", const="true")
    sp.add_argument("--tol")
    sp.add_argument("--bp-nr")
    sp.add_argument("--bp-nu")
    sp.add_argument("--bp-rmax")

    sp = sub.add_parser("verify", help="check the rigorous bounds on a default suite")
    common(sp)
    sp.add_argument("--suite", choices=["default", "quick"])

    sp = sub.add_parser("report", help="aggregate manifests of a results directory")
    sp.add_argument("--dir", required=True)
    sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "verbose")}
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    text = ""
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_INVALID
    try:
        cfg = parse_config(text, flags)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return run_task(cfg)


if __name__ == "__main__":
    sys.exit(main())
