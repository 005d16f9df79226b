"""Run configuration: key = value text with flag overrides."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

from .errors import ParseError, ValidationError

TASKS = ("pekar", "bipolaron", "pimc", "scan-binding", "verify", "report")
FORMATS = ("json", "csv")
SUITES = ("default", "quick")
DEFAULT_POINTS = 8  # Chebyshev coupling points when no schedule is given


@dataclass
class RunConfig:
    task: str = ""
    alpha: float = 1.0
    u: float = 0.0
    n: int = 1
    # Pekar radial grid, in units where alpha = 1
    grid_n: int = 2000
    grid_rmax: float = 20.0
    # task tolerance: solver residual (pekar, bipolaron) or bisection width (scan-binding);
    # None picks the task default
    tol: float | None = None
    # bipolaron internal grid
    bp_nr: int = 96
    bp_nu: int = 16
    bp_rmax: float = 20.0
    # Monte Carlo
    period: float = 32.0
    slices: int = 512
    sweeps: int = 200_000
    seed: int = 0
    schedule: str = ""  # comma-separated couplings; empty means 8 Chebyshev points
    external_v: float = 0.0  # > 0 turns on the oscillator validation mode
    trace: bool = False
    # scans
    u_min: float = 0.0
    u_max: float = 5.0
    u_steps: int = 11
    find_critical: bool = False
    suite: str = "default"
    dir: str = ""
    out: str = "results"
    format: str = "json"

    def schedule_values(self) -> list[float] | None:
        if not self.schedule.strip():
            return None
        return [float(x) for x in self.schedule.split(",")]

    def task_tol(self) -> float:
        if self.tol is not None:
            return self.tol
        return 0.01 if self.task == "scan-binding" else 1e-8


_FIELDS = {f.name: f for f in fields(RunConfig)}
_TYPES = {name: RunConfig.__annotations__[name] for name in _FIELDS}


def _convert(name: str, raw: str):
    kind = _TYPES[name]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "float | None":
            return None if raw.lower() in ("", "none") else float(raw)
        return raw
    except ValueError:
        raise ValidationError(f"{name}: cannot read {raw!r} as {kind}", field=name) from None


def _key(raw: str) -> str:
    return raw.strip().replace("-", "_")


def parse_config(text: str = "", flags: dict | None = None) -> RunConfig:
    """Build a validated RunConfig from key = value lines; ``flags`` override them.

    Blank lines and lines starting with '#' are ignored.
    """
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ParseError(f"line {lineno}: expected key = value, got {s!r}", line=lineno)
        k, v = s.split("=", 1)
        key = _key(k)
        if key not in _FIELDS:
            raise ParseError(f"line {lineno}: unknown key {k.strip()!r}", field=key, line=lineno)
        values[key] = _convert(key, v)
    for k, v in (flags or {}).items():
        if v is None:
            continue
        key = _key(k)
        if key not in _FIELDS:
            raise ValidationError(f"unknown option {k!r}", field=key)
        values[key] = _convert(key, v) if isinstance(v, str) else v
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    def bad(name, why):
        raise ValidationError(f"{name}: {why}", field=name)

    if not cfg.task:
        bad("task", "a task must be given")
    if cfg.task not in TASKS:
        bad("task", f"unknown task {cfg.task!r}; choose from {', '.join(TASKS)}")
    if not cfg.alpha >= 0 or cfg.alpha != cfg.alpha or cfg.alpha == float("inf"):
        bad("alpha", f"must be a finite nonnegative number, got {cfg.alpha}")
    if cfg.task in ("pekar", "bipolaron", "scan-binding") and cfg.alpha == 0:
        bad("alpha", "must be positive for this task")
    if not cfg.u >= 0:
        bad("u", f"must be nonnegative, got {cfg.u}")
    if cfg.n not in (1, 2):
        bad("n", "must be 1 or 2")
    if cfg.grid_n < 16:
        bad("grid_n", "need at least 16 radial points")
    if not cfg.grid_rmax > 0:
        bad("grid_rmax", "must be positive")
    if cfg.tol is not None and not cfg.tol > 0:
        bad("tol", "must be positive")
    if cfg.bp_nr < 16:
        bad("bp_nr", "need at least 16 radial points")
    if cfg.bp_nu < 1:
        bad("bp_nu", "need at least one angular node")
    if not cfg.bp_rmax > 0:
        bad("bp_rmax", "must be positive")
    if cfg.task == "pimc":
        if cfg.period < 16:
            bad("period", "must be at least 16")
        if cfg.slices < 8 * cfg.period:
            bad("slices", "need at least 8 slices per unit time")
        if cfg.sweeps < 1000:
            bad("sweeps", "need at least 1000 sweeps")
    if cfg.external_v < 0:
        bad("external_v", "must be nonnegative")
    try:
        sched = cfg.schedule_values()
    except ValueError:
        bad("schedule", f"not a comma-separated list of numbers: {cfg.schedule!r}")
    if sched is not None:
        if sched[0] != 0 or any(b <= a for a, b in zip(sched, sched[1:])) or abs(sched[-1] - cfg.alpha) > 1e-12:
            bad("schedule", "must increase strictly from 0 to alpha")
    if cfg.task == "pimc" and cfg.external_v == 0 and cfg.alpha > 0:
        n_pts = len(sched) if sched is not None else DEFAULT_POINTS
        if cfg.sweeps < 1000 * n_pts:
            bad("sweeps", f"need at least 1000 sweeps per coupling point ({n_pts} points)")
    if cfg.u_steps < 1:
        bad("u_steps", "must be at least 1")
    if cfg.u_min < 0 or cfg.u_max < cfg.u_min:
        bad("u_max", "need 0 <= u_min <= u_max")
    if cfg.suite not in SUITES:
        bad("suite", f"unknown suite {cfg.suite!r}")
    if cfg.format not in FORMATS:
        bad("format", f"must be one of {FORMATS}")
    if cfg.task == "report" and not cfg.dir:
        bad("dir", "report needs a directory")


def emit_config(cfg: RunConfig) -> str:
    lines = []
    for name in _FIELDS:
        v = getattr(cfg, name)
        if v is None:
            s = "none"
        elif isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, float):
            s = repr(v)
        else:
            s = str(v)
        lines.append(f"{name}={s}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    """Hash of everything that affects results (output location excluded)."""
    text = "\n".join(line for line in emit_config(cfg).splitlines() if not line.startswith(("out=", "dir=")))
    return hashlib.sha256(text.encode()).hexdigest()[:16]
