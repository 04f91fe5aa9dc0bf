"""Experiment configuration, presets and the simulation driver."""

from __future__ import annotations

import configparser
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import diagnostics
from .geometry import LidMotion, StripMap, lid_lambda
from .integrator import DaeOptions, DaeProblem, StagnationError, make_consistent, solve_dae
from .pde import BlinkModel, DirichletHeatKernel, FluxModel, NoFlux, dae_residual
from .spectral import ChebGrid1D

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_THRESHOLDS = 2
EXIT_STAGNATION = 3
EXIT_CONFIG = 4


@dataclass
class ExperimentConfig:
    experiment: str = "heat"
    nx: int = 28
    ny: int = 24
    c: float = 0.8
    nu: float = 16.0
    alpha: float = 1.3
    gamma: float = 2.2
    kappa: float = 1.0
    A: float = 1.0
    B: float = 1e-9
    h0: float = 0.1
    bc: str = "dirichlet-kernel"
    t0: float = 0.01
    x0: float = 0.1
    y0: float = 0.2
    t_end: float = 0.125
    sample_dt: float = 0.00125
    snapshots: tuple = (0.0, 0.03125, 0.0625, 0.09375, 0.125)
    rtol: float = 1e-9
    atol: float = 1e-9
    max_order: int = 5
    out: str = "out"
    # acceptance thresholds written to summary.txt; None disables a check
    check_relerr: Optional[float] = None
    check_mass: Optional[float] = None
    check_lid_min: Optional[float] = None
    check_lid_min_time: Optional[float] = None
    wall_time_reference: Optional[float] = None


PRESETS = {
    "heat51": dict(
        experiment="heat", nx=28, ny=24, c=0.8, nu=16.0, kappa=1.0, bc="dirichlet-kernel",
        t0=0.01, x0=0.1, y0=0.2, t_end=0.125, sample_dt=0.00125,
        snapshots=(0.0, 0.03125, 0.0625, 0.09375, 0.125), rtol=1e-9, atol=1e-9,
        check_relerr=1e-4, wall_time_reference=11.3,
    ),
    "porous52": dict(
        experiment="porous", nx=32, ny=48, c=0.7, nu=1.0, kappa=0.5, bc="no-flux",
        t_end=2.0, sample_dt=0.01, snapshots=(0.0, 0.25, 0.5, 0.75, 1.0),
        rtol=1e-9, atol=1e-9, check_mass=5e-6, wall_time_reference=73.0,
    ),
    "film53": dict(
        experiment="film", nx=31, ny=40, c=0.8, nu=1.0, A=1.0, B=1e-9, h0=0.1, bc="no-flux",
        t_end=2.0, sample_dt=0.01, snapshots=(0.0, 0.25, 0.5, 0.75, 1.0),
        rtol=1e-7, atol=1e-7, check_mass=5e-5, check_lid_min=0.01067,
        check_lid_min_time=0.78, wall_time_reference=40.0,
    ),
}

# config-file key -> dataclass field
KEYS = {
    "experiment": "experiment",
    "grid.nx": "nx", "grid.ny": "ny",
    "lid.c": "c", "lid.nu": "nu",
    "map.alpha": "alpha", "map.gamma": "gamma",
    "flux.kappa": "kappa", "flux.A": "A", "flux.B": "B",
    "init.h0": "h0",
    "bc": "bc",
    "kernel.t0": "t0", "kernel.x0": "x0", "kernel.y0": "y0",
    "time.t_end": "t_end", "time.sample_dt": "sample_dt", "time.snapshots": "snapshots",
    "tol.rtol": "rtol", "tol.atol": "atol", "tol.max_order": "max_order",
    "output.dir": "out",
    "check.relerr": "check_relerr", "check.mass": "check_mass",
    "check.lid_min": "check_lid_min", "check.lid_min_time": "check_lid_min_time",
}
FIELD_KEYS = {v: k for k, v in KEYS.items()}


class ConfigError(ValueError):
    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


def preset(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError([f"preset: unknown preset {name!r} (choose from {', '.join(PRESETS)})"])
    return dataclasses.replace(ExperimentConfig(), **{**PRESETS[name], **overrides})


def _coerce(fieldname, raw: str):
    ftype = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}[fieldname]
    raw = raw.strip()
    if fieldname == "snapshots":
        return tuple(float(v) for v in raw.replace(",", " ").split())
    if ftype in ("int",):
        return int(raw)
    if ftype in ("float", "Optional[float]"):
        return None if raw.lower() == "none" else float(raw)
    return raw


def read_config_file(path) -> tuple[ExperimentConfig, dict]:
    """Parse a flat ``key = value`` file.

    A ``preset`` key seeds the values; ``sweep.<key>`` entries hold
    comma-separated alternatives and are returned separately.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    text = Path(path).read_text()
    parser.read_string("[config]\n" + text)
    items = dict(parser["config"])
    violations = []
    base = ExperimentConfig()
    if "preset" in items:
        try:
            base = preset(items.pop("preset").strip())
        except ConfigError as exc:
            raise ConfigError(exc.violations) from None
    values, sweep = {}, {}
    for key, raw in items.items():
        if key.startswith("sweep."):
            inner = key[len("sweep."):]
            if inner not in KEYS:
                violations.append(f"{key}: unknown key")
                continue
            sweep[inner] = [v.strip() for v in raw.split(",") if v.strip()]
            continue
        if key not in KEYS:
            violations.append(f"{key}: unknown key")
            continue
        try:
            values[KEYS[key]] = _coerce(KEYS[key], raw)
        except ValueError:
            violations.append(f"{key}: cannot parse {raw!r}")
    if violations:
        raise ConfigError(violations)
    return dataclasses.replace(base, **values), sweep


def expand_sweep(cfg: ExperimentConfig, sweep: dict) -> list[tuple[str, ExperimentConfig]]:
    runs = [("", cfg)]
    for key, alternatives in sweep.items():
        fname = KEYS[key]
        runs = [
            (f"{tag}{'_' if tag else ''}{key}={val}",
             dataclasses.replace(c, **{fname: _coerce(fname, val)}))
            for tag, c in runs for val in alternatives
        ]
    return [(tag, dataclasses.replace(c, out=str(Path(cfg.out) / tag))) for tag, c in runs]


def validate(cfg: ExperimentConfig) -> list[str]:
    """Names and reasons of every invalid field; empty when the config is usable."""
    v = []

    def bad(fieldname, why):
        v.append(f"{FIELD_KEYS.get(fieldname, fieldname)}: {why}")

    if cfg.experiment not in ("heat", "porous", "film"):
        bad("experiment", f"must be heat, porous or film, got {cfg.experiment!r}")
    if cfg.bc not in ("dirichlet-kernel", "no-flux"):
        bad("bc", f"must be dirichlet-kernel or no-flux, got {cfg.bc!r}")
    for name in ("nx", "ny"):
        if getattr(cfg, name) < 3:
            bad(name, "need at least 3 nodes")
    if not 0 < cfg.c <= 1:
        bad("c", "closure fraction must lie in (0, 1]")
    if not cfg.nu > 0:
        bad("nu", "frequency must be positive")
    if not cfg.alpha > 1:
        bad("alpha", "must exceed 1 so the strip is truncated")
    if not cfg.gamma > 0:
        bad("gamma", "must be positive")
    if cfg.experiment == "heat" and not cfg.kappa > 0:
        bad("kappa", "diffusivity must be positive")
    if cfg.experiment == "porous" and not 0 < cfg.kappa <= 1:
        bad("kappa", "must lie in (0, 1]")
    if cfg.experiment == "film":
        if not cfg.A > 0:
            bad("A", "must be positive")
        if not cfg.B >= 0:
            bad("B", "must be nonnegative")
        if not cfg.h0 > 0:
            bad("h0", "initial thickness must be positive")
    if cfg.bc == "dirichlet-kernel":
        if cfg.experiment != "heat":
            bad("bc", "the heat-kernel Dirichlet condition only solves the heat experiment")
        if not cfg.t0 > 0:
            bad("t0", "kernel time offset must be positive")
        elif 0 < cfg.c <= 1 and cfg.nu > 0 and cfg.alpha > 1 and cfg.gamma > 0:
            if not _inside_eye(cfg, cfg.x0, cfg.y0, 0.0):
                bad("x0", "source must lie inside the initial eye domain")
    if not cfg.t_end > 0:
        bad("t_end", "must be positive")
    if not cfg.sample_dt > 0:
        bad("sample_dt", "must be positive")
    if any(not 0 <= s <= cfg.t_end for s in cfg.snapshots):
        bad("snapshots", "all snapshot times must lie in [0, t_end]")
    if not (cfg.rtol > 0 and cfg.atol > 0):
        bad("rtol", "tolerances must be positive")
    if not 1 <= cfg.max_order <= 5:
        bad("max_order", "must be in 1..5")
    if 0 < cfg.c <= 1 and cfg.nu > 0:
        lam_min = 1 - cfg.c + cfg.c * np.tanh(-4.0)
        if lam_min <= -1:
            bad("c", "lid closes the strip completely")
    return v


def _inside_eye(cfg, x, y, t):
    lam = lid_lambda(LidMotion(cfg.c, cfg.nu), t)
    zs = 2.0 * np.arctanh(complex(x, y))
    return (-1.0 < zs.imag < lam) and abs(zs.real) < cfg.gamma / (cfg.alpha**2 - 1.0)


def build_model(cfg: ExperimentConfig) -> BlinkModel:
    if cfg.experiment == "heat":
        flux = FluxModel.linear_heat(cfg.kappa)
    elif cfg.experiment == "porous":
        flux = FluxModel.porous(cfg.kappa)
    else:
        flux = FluxModel.thin_film(cfg.A, cfg.B)
    if cfg.bc == "dirichlet-kernel":
        bc = DirichletHeatKernel(cfg.t0, cfg.x0, cfg.y0, cfg.kappa)
    else:
        bc = NoFlux()
    return BlinkModel(
        ChebGrid1D(cfg.nx), ChebGrid1D(cfg.ny), StripMap(cfg.alpha, cfg.gamma),
        LidMotion(cfg.c, cfg.nu), flux, bc,
    )


def porous_initial(xs, ys):
    return 1.0 - 0.8 * np.exp(-6.0 * (ys + 0.2) ** 2 - 4.0 * (xs - 1.0) ** 2)


def initial_state(cfg: ExperimentConfig, model: BlinkModel) -> np.ndarray:
    mg = model.mapped_grid(0.0)
    if isinstance(model.bc, DirichletHeatKernel):
        return model.bc.exact(0.0, mg.x, mg.y)
    if cfg.experiment == "porous":
        return porous_initial(mg.xs, mg.ys)
    return np.full(model.shape, cfg.h0 if cfg.experiment == "film" else 1.0)


def make_problem(model: BlinkModel, H0, t_end, schedule) -> DaeProblem:
    shape = model.shape

    def residual(t, y, yp):
        sh = y.shape[:-1] + shape
        return dae_residual(y.reshape(sh), yp.reshape(sh), t, model).reshape(y.shape)

    _, Bp = model.masks()
    return DaeProblem(residual, Bp, np.asarray(H0).ravel(), (0.0, t_end), schedule)


def sample_times(cfg: ExperimentConfig) -> np.ndarray:
    n = int(round(cfg.t_end / cfg.sample_dt))
    ts = np.arange(n + 1) * cfg.sample_dt
    ts = ts[ts <= cfg.t_end * (1 + 1e-12)]
    return np.unique(np.round(np.concatenate([ts, cfg.snapshots, [cfg.t_end]]), 12))


@dataclass
class RunResult:
    config: ExperimentConfig
    model: BlinkModel
    times: list = field(default_factory=list)
    states: dict = field(default_factory=dict)
    mass: diagnostics.MassSeries = field(default_factory=diagnostics.MassSeries)
    relerr: list = field(default_factory=list)
    lid: list = field(default_factory=list)
    stats: object = None
    wall_time: float = 0.0
    stagnated: bool = False
    t_reached: float = 0.0
    message: str = ""
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(ok for _, ok, _ in self.checks)


def simulate(cfg: ExperimentConfig) -> RunResult:
    """Integrate one experiment and collect every diagnostic series."""
    violations = validate(cfg)
    if violations:
        raise ConfigError(violations)
    model = build_model(cfg)
    H0 = initial_state(cfg, model)
    schedule = sample_times(cfg)
    problem = make_problem(model, H0, cfg.t_end, schedule)
    opts = DaeOptions(rtol=cfg.rtol, atol=cfg.atol, max_order=cfg.max_order)
    problem.y0 = make_consistent(problem.y0, 0.0, problem, opts)

    result = RunResult(cfg, model)
    snaps = set(np.round(cfg.snapshots, 12))
    shape = model.shape
    is_dirichlet = isinstance(model.bc, DirichletHeatKernel)

    def observer(t, y):
        H = y.reshape(shape)
        mg = model.mapped_grid(t)
        result.times.append(t)
        result.mass.append(t, diagnostics.mass(H, mg, model.gx, model.gy))
        if is_dirichlet:
            exact = model.bc.exact(t, mg.x, mg.y)
            result.relerr.append(diagnostics.l2_relative_error(H, exact, mg, model.gx, model.gy))
        if model.gx.n % 2 == 1:
            result.lid.append(diagnostics.lid_center_values(H, model.gx, model.gy))
        if round(t, 12) in snaps:
            result.states[t] = (mg.x.copy(), mg.y.copy(), H.copy())

    start = time.perf_counter()
    try:
        sol = solve_dae(problem, opts, observer)
        result.stats = sol.stats
        result.t_reached = sol.t_reached
    except StagnationError as exc:
        result.stagnated = True
        result.t_reached = exc.t_last
        result.stats = exc.stats
        result.message = str(exc)
        log.warning("integration stagnated: %s", exc)
    result.wall_time = time.perf_counter() - start
    result.checks = evaluate_checks(result)
    return result


def lid_minimum(result: RunResult, t_max=None):
    """Minimum upper-lid value and its time over the recorded samples up to ``t_max``."""
    if not result.lid:
        return None
    t = np.asarray(result.times)
    upper = np.array([u for u, _ in result.lid])
    if t_max is not None:
        keep = t <= t_max + 1e-12
        t, upper = t[keep], upper[keep]
    k = int(np.argmin(upper))
    return float(upper[k]), float(t[k])


def evaluate_checks(result: RunResult) -> list:
    """``(name, passed, detail)`` for every threshold configured on the run."""
    cfg = result.config
    checks = []
    if result.stagnated:
        checks.append(("completed", False, f"stagnated at t={result.t_reached:.6g}"))
    if cfg.check_relerr is not None and result.relerr:
        worst = max(result.relerr)
        checks.append(("max relative L2 error", worst <= cfg.check_relerr,
                       f"{worst:.3e} <= {cfg.check_relerr:.1e}"))
    if cfg.check_mass is not None and result.mass.times:
        worst = result.mass.max_abs_relative_change()
        checks.append(("max |relative mass change|", worst <= cfg.check_mass,
                       f"{worst:.3e} <= {cfg.check_mass:.1e}"))
    if cfg.check_lid_min is not None and result.lid:
        hmin, tmin = lid_minimum(result, t_max=1.0 / cfg.nu)
        ok = abs(hmin - cfg.check_lid_min) <= 0.1 * cfg.check_lid_min
        if cfg.check_lid_min_time is not None:
            ok = ok and abs(tmin - cfg.check_lid_min_time) <= 0.02
        checks.append(("first-cycle upper-lid minimum", ok,
                       f"{hmin:.5f} at t={tmin:.2f} (target {cfg.check_lid_min} at t={cfg.check_lid_min_time})"))
    return checks


def exit_code(result: RunResult) -> int:
    if result.stagnated:
        return EXIT_STAGNATION
    return EXIT_OK if result.passed else EXIT_THRESHOLDS


def _fmt(v) -> str:
    return format(float(v), ".17g")


def snapshot_name(t) -> str:
    return f"t={float(t):g}.csv"


def write_outputs(result: RunResult, out=None) -> Path:
    """Write snapshot grids, time series and ``summary.txt`` under ``out``."""
    out = Path(out if out is not None else result.config.out)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    for t, (x, y, H) in sorted(result.states.items()):
        lines = ["x,y,h"]
        lines += [f"{_fmt(a)},{_fmt(b)},{_fmt(c)}" for a, b, c in zip(x.ravel(), y.ravel(), H.ravel())]
        (out / "snapshots" / snapshot_name(t)).write_text("\n".join(lines) + "\n")

    rc = result.mass.relative_change
    lines = ["t,M,relchange"]
    lines += [f"{_fmt(t)},{_fmt(m)},{_fmt(r)}" for t, m, r in zip(result.mass.times, result.mass.mass, rc)]
    (out / "mass.csv").write_text("\n".join(lines) + "\n")

    if result.relerr:
        lines = ["t,relerr"] + [f"{_fmt(t)},{_fmt(e)}" for t, e in zip(result.times, result.relerr)]
        (out / "error.csv").write_text("\n".join(lines) + "\n")
    if result.config.experiment == "film" and result.lid:
        lines = ["t,upper,lower"]
        lines += [f"{_fmt(t)},{_fmt(u)},{_fmt(w)}" for t, (u, w) in zip(result.times, result.lid)]
        (out / "lid.csv").write_text("\n".join(lines) + "\n")

    (out / "summary.txt").write_text(summary_text(result))
    return out


def summary_text(result: RunResult) -> str:
    cfg = result.config
    st = result.stats
    rows = [
        ("experiment", cfg.experiment),
        ("grid", f"{cfg.nx}x{cfg.ny}"),
        ("lid c, nu", f"{cfg.c:g}, {cfg.nu:g}"),
        ("map alpha, gamma", f"{cfg.alpha:g}, {cfg.gamma:g}"),
        ("rtol, atol", f"{cfg.rtol:g}, {cfg.atol:g}"),
        ("t reached", f"{result.t_reached:.6g} of {cfg.t_end:g}"),
        ("wall time [s]", f"{result.wall_time:.2f}"),
    ]
    if cfg.wall_time_reference is not None:
        rows.append(("reference wall time [s]", f"{cfg.wall_time_reference:g} (reference hardware, not gated)"))
    if st is not None:
        rows += [
            ("steps", st.nsteps), ("failed steps", st.nfailed),
            ("residual evaluations", st.nfev), ("Newton iterations", st.newton_iters),
            ("Jacobian evaluations", st.njev), ("LU factorizations", st.nlu),
        ]
    if result.message:
        rows.append(("message", result.message))
    width = max(len(k) for k, _ in rows)
    lines = [f"{k:<{width}}  {v}" for k, v in rows]
    lines.append("")
    for name, ok, detail in result.checks:
        lines.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    status = {EXIT_OK: "OK", EXIT_THRESHOLDS: "THRESHOLDS VIOLATED", EXIT_STAGNATION: "STAGNATED"}
    lines.append(f"status  {status[exit_code(result)]}")
    return "\n".join(lines) + "\n"
