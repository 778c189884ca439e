"""Run orchestration and persistence: trajectories, sweeps, scaling studies.

Output conventions
------------------
Trajectory CSV (comma separator, LF endings, reals at 17 significant digits):

    # config_digest=<sha256 of the resolved config>
    k,a,b,c,B,C,r,loss,align,g_wstar,g_v,g_perp

Sweep CSV is long-form, one row per (eta, lambda) cell:

    # config_digest=...
    eta,lambda,final_align,final_loss,status,T1a,T1,T2a,T2,nprime1,nprime2

plus an ``*_matrix.csv`` pivot of final alignment (rows lambda, columns eta).
A resolved-config JSON is written next to every output file.  Undefined
fields (spike coefficients of a power-law run, stage times never reached)
serialize as nan / empty.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .covariance import (
    CovarianceSpec,
    PowerLawCovariance,
    ProblemSpec,
    SpikedCovariance,
    gaussian_init,
    manifold_init,
    power_law_problem,
    stiefel_init,
    theta_squared,
)
from .empirical import BatchSampler, empirical_loss_and_gradient
from .matrix import (
    WeightState,
    alignment,
    manifold_coefficients,
    population_gradient,
    population_loss,
    specgd_step,
)
from .covariance import polar
from .reduced import (
    ReducedState,
    ReducedTrajectory,
    SpecBoundConstants,
    StageThresholds,
    StageTimes,
    detect_stages,
    gd_safe_eta,
    isotropic_state,
    simulate_reduced,
    verify_gd_barriers,
    verify_spec_traps,
)

__all__ = [
    "RunConfig",
    "TrajectoryRecord",
    "TrajectoryResult",
    "SweepConfig",
    "CellResult",
    "SweepResult",
    "StageScalingResult",
    "VerificationReport",
    "run_trajectory",
    "run_sweep",
    "run_stage_scaling",
    "run_verification_suite",
    "resolve_eta",
    "config_digest",
    "write_trajectory_csv",
    "read_csv_columns",
    "DIVERGENCE_LOSS",
    "TRAJECTORY_COLUMNS",
    "SWEEP_COLUMNS",
]

DIVERGENCE_LOSS = 1e12
TRAJECTORY_COLUMNS = ("k", "a", "b", "c", "B", "C", "r", "loss", "align",
                      "g_wstar", "g_v", "g_perp")
SWEEP_COLUMNS = ("eta", "lambda", "final_align", "final_loss", "status",
                 "T1a", "T1", "T2a", "T2", "nprime1", "nprime2")

ALGORITHMS = ("gd", "specgd")
MODES = ("population-reduced", "population-matrix", "empirical")
INITS = ("manifold", "stiefel", "gaussian")
ETA_RULES = ("fixed", "kappa_over_sqrt", "gd_safe")


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Everything needed to reproduce one training run."""

    algorithm: str
    mode: str
    d: int
    m: int
    covariance: CovarianceSpec
    rho0: float
    horizon: int
    eta: Optional[float] = None
    eta_rule: str = "fixed"
    kappa: float = 0.05
    gd_safe_fraction: float = 0.5
    init: str = "manifold"
    batch_size: int = 5000
    sigma: float = 0.0
    thresholds: StageThresholds = field(default_factory=StageThresholds)
    seed: int = 0
    log_every: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")
        if self.eta_rule not in ETA_RULES:
            raise ValueError(f"eta_rule must be one of {ETA_RULES}")
        if self.eta_rule == "fixed" and (self.eta is None or self.eta <= 0):
            raise ValueError("eta_rule='fixed' requires eta > 0")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")
        if self.rho0 <= 0:
            raise ValueError("rho0 must be > 0")
        spiked = isinstance(self.covariance, SpikedCovariance)
        if self.mode == "population-reduced":
            if not spiked:
                raise ValueError("population-reduced mode requires a spiked covariance")
            if self.init != "manifold":
                raise ValueError("population-reduced mode requires manifold init")
        if self.mode == "empirical" and self.batch_size < 1:
            raise ValueError("empirical mode requires batch_size >= 1")
        if self.init == "manifold" and self.mode == "population-matrix" and self.m != self.d:
            raise ValueError("manifold init in matrix mode requires m = d")
        if self.d != self.covariance.dim:
            raise ValueError("d must match covariance.dim")

    @property
    def lam(self) -> float:
        if isinstance(self.covariance, SpikedCovariance):
            return self.covariance.lam
        raise AttributeError("lam undefined for power-law covariance")


def resolve_eta(config: RunConfig) -> float:
    """Learning rate implied by the config's eta rule."""
    if config.eta_rule == "fixed":
        return float(config.eta)
    if config.eta_rule == "kappa_over_sqrt":
        if not isinstance(config.covariance, SpikedCovariance):
            raise ValueError("kappa_over_sqrt rule needs a spiked covariance")
        return config.kappa / math.sqrt(config.d + config.lam)
    if config.eta_rule == "gd_safe":
        if not isinstance(config.covariance, SpikedCovariance):
            raise ValueError("gd_safe rule needs a spiked covariance")
        return config.gd_safe_fraction / (16.0 * (1.0 + config.lam))
    raise ValueError(f"unknown eta rule {config.eta_rule!r}")


def build_problem(config: RunConfig) -> ProblemSpec:
    cov = config.covariance
    if isinstance(cov, SpikedCovariance):
        target = _unit_orthogonal_to(cov.spike_direction)
        return ProblemSpec(d=config.d, m=config.m, target=target, covariance=cov,
                           noise_sigma=config.sigma)
    return power_law_problem(config.d, config.m, cov.alpha, sigma=config.sigma,
                             basis_seed=cov.basis_seed)


def _unit_orthogonal_to(v: np.ndarray) -> np.ndarray:
    """Deterministic unit vector orthogonal to v (canonical axis, reorthogonalized)."""
    d = v.shape[0]
    idx = int(np.argmin(np.abs(v)))
    w = np.zeros(d)
    w[idx] = 1.0
    w = w - (w @ v) * v
    return w / np.linalg.norm(w)


# ---------------------------------------------------------------------------
# Config serialization and digests
# ---------------------------------------------------------------------------

def _covariance_dict(cov: CovarianceSpec) -> dict:
    if isinstance(cov, SpikedCovariance):
        return {"kind": "spiked", "dim": cov.dim, "lam": cov.lam,
                "spike_direction": cov.spike_direction.tolist()}
    return {"kind": "power-law", "dim": cov.dim, "alpha": cov.alpha,
            "basis_seed": cov.basis_seed}


def resolved_config_dict(config: RunConfig) -> dict:
    out = asdict(config)
    out["covariance"] = _covariance_dict(config.covariance)
    out["thresholds"] = asdict(config.thresholds)
    out["resolved_eta"] = resolve_eta(config)
    return out


def config_digest(config) -> str:
    """sha256 over the canonical JSON of a resolved config (dict or RunConfig)."""
    if isinstance(config, RunConfig):
        config = resolved_config_dict(config)
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _write_config_json(payload: dict, path: Path):
    payload = dict(payload)
    payload["config_digest"] = config_digest(payload)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryRecord:
    k: int
    a: float
    b: float
    c: float
    B: float
    C: float
    r: float
    loss: float
    align: float
    g_wstar: float
    g_v: float
    g_perp: float
    in_region: bool


@dataclass(eq=False)
class TrajectoryResult:
    config: RunConfig
    eta: float
    columns: dict
    stage_times: StageTimes
    status: str              # "ok" | "diverged" | numerical-failure raises instead
    steps_run: int
    coefficients: Optional[ReducedTrajectory]

    @property
    def records(self):
        cols = self.columns
        n = len(cols["k"])
        return [TrajectoryRecord(**{key: cols[key][i] for key in TRAJECTORY_COLUMNS},
                                 in_region=bool(cols["in_region"][i]))
                for i in range(n)]

    @property
    def final_alignment(self) -> float:
        return float(self.columns["align"][-1])

    @property
    def final_loss(self) -> float:
        return float(self.columns["loss"][-1])


def _init_weight_state(config: RunConfig, problem: ProblemSpec, seed) -> WeightState:
    lam = config.lam if isinstance(config.covariance, SpikedCovariance) else 0.0
    if config.init == "manifold":
        theta = math.sqrt(theta_squared(config.rho0, config.d, lam, rule="mass"))
        return manifold_init(config.d, config.m, theta)
    if config.init == "stiefel":
        theta = math.sqrt(theta_squared(config.rho0, config.d, lam, rule="mass"))
        return stiefel_init(config.d, config.m, theta, seed)
    theta = math.sqrt(theta_squared(config.rho0, config.d, m=config.m, rule="gaussian"))
    return gaussian_init(config.d, config.m, theta, seed)


def _matrix_coeff_arrays(states_abc, lam, d, eta, algorithm):
    a, b, c = (np.asarray(x) for x in states_abc)
    # Projections can dip an ulp below zero; the reduced container requires >= 0.
    return ReducedTrajectory(np.maximum(a, 0.0), np.maximum(b, 0.0),
                             np.maximum(c, 0.0), lam, d, eta, algorithm)


def _affine_pre_gradients(a, b, c, lam, d):
    r = a + (1.0 + lam) * b + (d - 2) * c
    g_w = 4.0 * (r + 2.0 * a - 3.0)
    g_v = 4.0 * (1.0 + lam) * (r + 2.0 * (1.0 + lam) * b - 1.0)
    g_p = 4.0 * (r + 2.0 * c - 1.0)
    return g_w, g_v, g_p


def run_trajectory(config: RunConfig, outdir=None, basename=None) -> TrajectoryResult:
    """Simulate one run, detect stage times, and optionally persist CSV + JSON.

    Population modes are deterministic given the init seed; empirical mode
    draws a fresh batch per step from seeds spawned off config.seed, so the
    whole trajectory is reproducible from the config alone.
    """
    eta = resolve_eta(config)
    problem = build_problem(config)
    spiked = isinstance(config.covariance, SpikedCovariance)
    lam = config.lam if spiked else float("nan")

    if config.mode == "population-reduced":
        init = isotropic_state(config.rho0, lam, config.d)
        traj = simulate_reduced(init, eta, lam, config.d, config.horizon,
                                config.algorithm)
        status, steps_run = "ok", config.horizon
        losses = traj.loss(config.sigma)
        aligns = traj.alignment
        coeffs, aux = traj, None
    else:
        coeffs, aux, losses, aligns, status, steps_run = _simulate_matrix_like(
            config, problem, eta, spiked, lam)

    stage_times = StageTimes()
    if spiked and coeffs is not None:
        stage_times = detect_stages(coeffs, config.thresholds, config.algorithm)

    columns = _assemble_columns(config, coeffs, aux, losses, aligns, lam)
    result = TrajectoryResult(config=config, eta=eta, columns=columns,
                              stage_times=stage_times, status=status,
                              steps_run=steps_run, coefficients=coeffs)
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        base = basename or f"trajectory_{config.algorithm}_{config.mode}"
        write_trajectory_csv(result, outdir / f"{base}.csv")
        payload = resolved_config_dict(config)
        payload["status"] = status
        payload["stage_times"] = asdict(stage_times)
        _write_config_json(payload, outdir / f"{base}.config.json")
    return result


def _simulate_matrix_like(config, problem, eta, spiked, lam):
    """Shared loop for population-matrix and empirical modes."""
    rng_root = np.random.SeedSequence(config.seed)
    init_seed, batch_root = rng_root.spawn(2)
    state = _init_weight_state(config, problem, init_seed)
    empirical = config.mode == "empirical"
    sampler = BatchSampler(problem) if empirical else None
    batch_seeds = batch_root.spawn(config.horizon) if empirical else None
    q = None if spiked else problem.covariance_matrix()
    what = problem.target / np.linalg.norm(problem.target)

    def project(st: WeightState):
        if spiked:
            return manifold_coefficients(st, problem)
        a = float(what @ st.M @ what)
        return a, float("nan"), float("nan")

    a_hist = [0.0] * (config.horizon + 1)
    b_hist = [0.0] * (config.horizon + 1)
    c_hist = [0.0] * (config.horizon + 1)
    losses = np.full(config.horizon + 1, np.nan)
    aligns = np.full(config.horizon + 1, np.nan)
    mass = np.full(config.horizon + 1, np.nan)

    def observe(k, st, loss_value):
        a_hist[k], b_hist[k], c_hist[k] = project(st)
        losses[k] = loss_value
        aligns[k] = alignment(st, problem)
        if not spiked:
            mass[k] = float(np.sum(st.M * q))

    status = "ok"
    steps_run = 0
    if empirical:
        # Fresh batch per step; the loss logged at step k is the minibatch
        # loss of the batch used to move from step k to k+1 (evaluated at k).
        k = 0
        observe(0, state, np.nan)
        for k in range(config.horizon):
            batch = sampler.sample(config.batch_size, batch_seeds[k])
            loss_k, grad = empirical_loss_and_gradient(state, batch)
            losses[k] = loss_k
            if not np.isfinite(loss_k) or loss_k > DIVERGENCE_LOSS:
                status = "diverged"
                break
            direction = polar(grad) if config.algorithm == "specgd" else grad
            state = WeightState.from_weights(state.W - eta * direction)
            observe(k + 1, state, np.nan)
            steps_run = k + 1
        if status == "ok":
            final_batch = sampler.sample(config.batch_size, batch_root.spawn(1)[0])
            losses[config.horizon] = empirical_loss_and_gradient(state, final_batch)[0]
    else:
        observe(0, state, population_loss(state, problem))
        for k in range(config.horizon):
            grad = population_gradient(state, problem)
            direction = polar(grad.full_gradient) if config.algorithm == "specgd" else grad.full_gradient
            state = WeightState.from_weights(state.W - eta * direction)
            loss_k = population_loss(state, problem)
            observe(k + 1, state, loss_k)
            steps_run = k + 1
            if not np.isfinite(loss_k) or loss_k > DIVERGENCE_LOSS:
                status = "diverged"
                break

    end = steps_run + 1
    if spiked:
        coeffs = _matrix_coeff_arrays(
            (a_hist[:end], b_hist[:end], c_hist[:end]), lam, config.d, eta,
            config.algorithm)
        aux = None
    else:
        coeffs = None
        aux = {"a": np.asarray(a_hist[:end]), "mass": mass[:end]}
    return coeffs, aux, losses[:end], aligns[:end], status, steps_run


def _assemble_columns(config, coeffs, aux, losses, aligns, lam):
    n = len(losses)
    ks = list(range(0, n, config.log_every))
    if ks[-1] != n - 1:
        ks.append(n - 1)
    ks = np.asarray(ks, dtype=np.int64)

    if coeffs is not None:
        a = coeffs.a[ks]
        b = coeffs.b[ks]
        c = coeffs.c[ks]
        spike = coeffs.spike_mass[ks]
        bulk = coeffs.bulk_mass[ks]
        r = coeffs.mass[ks]
        g_w, g_v, g_p = _affine_pre_gradients(a, b, c, lam, config.d)
        in_region = (a <= 1.0 + 1e-12) & (spike <= 1.0 / 3.0 + 1e-12) & (bulk <= 1.0 + 1e-12)
    else:
        a = aux["a"][ks]
        nanarr = np.full(ks.shape, np.nan)
        b, c, spike, bulk = nanarr, nanarr, nanarr, nanarr
        r = aux["mass"][ks]
        g_w, g_v, g_p = nanarr, nanarr, nanarr
        in_region = np.zeros(ks.shape, dtype=bool)

    return {
        "k": ks,
        "a": a, "b": b, "c": c,
        "B": spike, "C": bulk, "r": r,
        "loss": np.asarray(losses)[ks],
        "align": np.asarray(aligns)[ks],
        "g_wstar": g_w, "g_v": g_v, "g_perp": g_p,
        "in_region": in_region,
    }


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_trajectory_csv(result: TrajectoryResult, path):
    path = Path(path)
    digest = config_digest(result.config)
    cols = result.columns
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# config_digest={digest}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS)
        for i in range(len(cols["k"])):
            writer.writerow([_fmt(cols[name][i]) for name in TRAJECTORY_COLUMNS])
    return path


def read_csv_columns(path):
    """Read one of our CSVs back into (columns dict, digest)."""
    digest = None
    rows = []
    with open(path, newline="") as fh:
        header = None
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                if "config_digest=" in line:
                    digest = line.split("config_digest=", 1)[1].strip()
                continue
            if not line:
                continue
            parts = line.split(",")
            if header is None:
                header = parts
            else:
                rows.append(parts)
    if header is None:
        raise ValueError(f"{path}: no header row")
    columns = {}
    for j, name in enumerate(header):
        vals = [row[j] for row in rows]
        if name in ("k", "d"):
            columns[name] = np.array([int(v) for v in vals], dtype=np.int64)
        elif name == "status":
            columns[name] = np.array(vals)
        elif name in ("T1a", "T1", "T2a", "T2", "nprime1", "nprime2"):
            columns[name] = np.array([float(v) if v else np.nan for v in vals])
        else:
            columns[name] = np.array([float(v) for v in vals])
    return columns, digest


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SweepConfig:
    base: RunConfig
    etas: Sequence[float]
    lambdas: Sequence[float]
    workers: int = 1


@dataclass(frozen=True)
class CellResult:
    eta: float
    lam: float
    final_align: float
    final_loss: float
    status: str
    stage_times: StageTimes


@dataclass(eq=False)
class SweepResult:
    config: SweepConfig
    cells: list

    def cell(self, i, j) -> CellResult:
        return self.cells[i * len(self.config.lambdas) + j]

    def alignment_matrix(self) -> np.ndarray:
        ne, nl = len(self.config.etas), len(self.config.lambdas)
        out = np.empty((nl, ne))
        for i in range(ne):
            for j in range(nl):
                out[j, i] = self.cell(i, j).final_align
        return out


def _cell_config(base: RunConfig, eta: float, lam: float, i: int, j: int) -> RunConfig:
    d = base.d
    old = base.covariance
    if isinstance(old, SpikedCovariance):
        cov = SpikedCovariance(dim=d, lam=float(lam), spike_direction=old.spike_direction)
    else:
        raise ValueError("sweeps are defined over spiked covariances")
    seed = int(np.random.SeedSequence(entropy=(base.seed, i, j)).generate_state(1)[0])
    return replace(base, covariance=cov, eta=float(eta), eta_rule="fixed", seed=seed)


def _run_cell(config: RunConfig) -> CellResult:
    # One BLAS thread per cell so serial and parallel execution agree bitwise.
    with threadpool_limits(limits=1):
        try:
            result = run_trajectory(config)
        except np.linalg.LinAlgError as exc:
            return CellResult(eta=float(config.eta), lam=config.lam,
                              final_align=0.0, final_loss=float("inf"),
                              status=f"numerical-failure: {exc}",
                              stage_times=StageTimes())
    if result.status == "diverged":
        return CellResult(eta=float(config.eta), lam=config.lam, final_align=0.0,
                          final_loss=float("inf"), status="diverged",
                          stage_times=result.stage_times)
    return CellResult(eta=float(config.eta), lam=config.lam,
                      final_align=result.final_alignment,
                      final_loss=result.final_loss, status="ok",
                      stage_times=result.stage_times)


def run_sweep(sweep: SweepConfig, outdir=None, basename=None) -> SweepResult:
    """Run every (eta, lambda) cell independently; cells may run in parallel.

    Divergent cells are kept in the grid with alignment 0 and an explicit
    status marker, so the result matrix never has holes.
    """
    if len(sweep.etas) == 0 or len(sweep.lambdas) == 0:
        raise ValueError("sweep grids must be non-empty")
    configs = [
        _cell_config(sweep.base, eta, lam, i, j)
        for i, eta in enumerate(sweep.etas)
        for j, lam in enumerate(sweep.lambdas)
    ]
    if sweep.workers > 1:
        with ProcessPoolExecutor(max_workers=sweep.workers) as pool:
            cells = list(pool.map(_run_cell, configs, chunksize=1))
    else:
        cells = [_run_cell(cfg) for cfg in configs]
    result = SweepResult(config=sweep, cells=cells)
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        base = basename or f"sweep_{sweep.base.algorithm}"
        _write_sweep_csv(result, outdir / f"{base}.csv")
        _write_sweep_matrix_csv(result, outdir / f"{base}_matrix.csv")
        payload = _sweep_config_dict(sweep)
        _write_config_json(payload, outdir / f"{base}.config.json")
    return result


def _sweep_config_dict(sweep: SweepConfig) -> dict:
    return {
        "base": resolved_config_dict(sweep.base),
        "etas": [float(x) for x in sweep.etas],
        "lambdas": [float(x) for x in sweep.lambdas],
        "workers": sweep.workers,
    }


def _stage_fields(st: StageTimes):
    return [("" if v is None else str(v))
            for v in (st.T1a, st.T1, st.T2a, st.T2, st.nprime1, st.nprime2)]


def _write_sweep_csv(result: SweepResult, path):
    digest = config_digest(_sweep_config_dict(result.config))
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# config_digest={digest}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for cell in result.cells:
            writer.writerow(
                [_fmt(cell.eta), _fmt(cell.lam), _fmt(cell.final_align),
                 _fmt(cell.final_loss), cell.status.split(":")[0]]
                + _stage_fields(cell.stage_times))
    return path


def _write_sweep_matrix_csv(result: SweepResult, path):
    digest = config_digest(_sweep_config_dict(result.config))
    matrix = result.alignment_matrix()
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# config_digest={digest}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["lambda"] + [_fmt(e) for e in result.config.etas])
        for j, lam in enumerate(result.config.lambdas):
            writer.writerow([_fmt(lam)] + [_fmt(x) for x in matrix[j]])
    return path


# ---------------------------------------------------------------------------
# Stage-time scaling studies
# ---------------------------------------------------------------------------

LAMBDA_RULES = {
    "sqrt": lambda d: math.sqrt(d),
    "d_over_10": lambda d: d / 10.0,
    "log": lambda d: math.log(d),
}


def _lambda_for(rule, d):
    if callable(rule):
        return float(rule(d))
    if isinstance(rule, str) and rule.startswith("const:"):
        return float(rule.split(":", 1)[1])
    if rule in LAMBDA_RULES:
        return LAMBDA_RULES[rule](d)
    raise ValueError(f"unknown lambda rule {rule!r}")


def _eta_for(rule, d, lam):
    """Parse 'kappa:x', 'etalam:x', 'safe:x', or 'fixed:x' into a step size."""
    kind, _, raw = str(rule).partition(":")
    value = float(raw)
    if kind == "kappa":
        return value / math.sqrt(d + lam)
    if kind == "etalam":
        return value / lam
    if kind == "safe":
        return value * gd_safe_eta(lam)
    if kind == "fixed":
        return value
    raise ValueError(f"unknown eta rule {rule!r}")


@dataclass(eq=False)
class StageScalingResult:
    algorithm: str
    rows: list            # dicts: d, lam, eta, T1a, T1, T2a, T2, nprime1, nprime2
    fit: Optional[dict]   # GD: T1 ~ slope * ln(d) + intercept; SpecGD: constant

    def t1_values(self):
        return [(row["d"], row["T1"]) for row in self.rows]


def run_stage_scaling(
    dims: Sequence[int],
    algorithm: str,
    *,
    lambda_rule="sqrt",
    eta_rule="etalam:0.02",
    rho0: float = 0.02,
    horizon: int = 200000,
    thresholds: StageThresholds = StageThresholds(),
    outdir=None,
    basename=None,
) -> StageScalingResult:
    """Reduced-dynamics stage times across dimensions, plus a T1 scaling fit.

    The fit needs at least three dimensions with a detected turning time;
    smaller studies still emit the table, just without a fit.
    """
    rows = []
    for d in dims:
        lam = _lambda_for(lambda_rule, d)
        eta = _eta_for(eta_rule, d, lam)
        traj = simulate_reduced(isotropic_state(rho0, lam, d), eta, lam, d,
                                horizon, algorithm)
        times = detect_stages(traj, thresholds, algorithm)
        rows.append({
            "d": d, "lam": lam, "eta": eta,
            "T1a": times.T1a, "T1": times.T1, "T2a": times.T2a, "T2": times.T2,
            "nprime1": times.nprime1, "nprime2": times.nprime2,
        })

    fitted = [(row["d"], row["T1"]) for row in rows if row["T1"] is not None]
    fit = None
    if len(fitted) >= 3:
        ds = np.array([math.log(d) for d, _ in fitted])
        t1 = np.array([t for _, t in fitted], dtype=np.float64)
        if algorithm == "gd":
            slope, intercept = np.polyfit(ds, t1, 1)
            fit = {"model": "T1 ~ slope*ln(d) + intercept",
                   "slope": float(slope), "intercept": float(intercept)}
        else:
            fit = {"model": "T1 ~ constant", "constant": float(t1.mean()),
                   "max_over_min": float(t1.max() / t1.min())}

    result = StageScalingResult(algorithm=algorithm, rows=rows, fit=fit)
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        base = basename or f"stages_{algorithm}"
        payload = {"algorithm": algorithm, "lambda_rule": str(lambda_rule),
                   "eta_rule": str(eta_rule), "rho0": rho0, "horizon": horizon,
                   "dims": [int(d) for d in dims],
                   "thresholds": asdict(thresholds)}
        digest = config_digest(payload)
        with open(outdir / f"{base}.csv", "w", newline="\n") as fh:
            fh.write(f"# config_digest={digest}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["d", "lambda", "eta", "T1a", "T1", "T2a", "T2",
                             "nprime1", "nprime2"])
            for row in rows:
                writer.writerow([row["d"], _fmt(row["lam"]), _fmt(row["eta"])]
                                + ["" if row[key] is None else str(row[key])
                                   for key in ("T1a", "T1", "T2a", "T2",
                                               "nprime1", "nprime2")])
        payload["fit"] = fit
        _write_config_json(payload, outdir / f"{base}.config.json")
    return result


# ---------------------------------------------------------------------------
# Verification suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerificationItem:
    name: str
    params: dict
    status: str      # "pass" | "fail" | "precondition-breach"
    detail: str


@dataclass(eq=False)
class VerificationReport:
    items: list

    @property
    def exit_code(self) -> int:
        return 1 if any(item.status == "fail" for item in self.items) else 0

    def to_dict(self) -> dict:
        return {"items": [asdict(item) for item in self.items],
                "exit_code": self.exit_code}


def _verify_gd_barriers_item(eta_scale: float = 0.5) -> VerificationItem:
    params = {"d": 200, "lam": 20.0, "rho0": 0.02, "steps": 5000}
    eta = gd_safe_eta(params["lam"]) * eta_scale
    traj = simulate_reduced(isotropic_state(params["rho0"], params["lam"], params["d"]),
                            eta, params["lam"], params["d"], params["steps"], "gd")
    report = verify_gd_barriers(traj, eta, params["lam"], params["d"])
    detail = "no violations" if not report.violations else str(report.first_violation)
    return VerificationItem("gd-barriers", {**params, "eta": eta}, report.status, detail)


def _verify_spec_traps_item() -> VerificationItem:
    params = {"d": 200, "lam": 20.0, "rho0": 0.02, "steps": 20000, "kappa": 0.05}
    eta = params["kappa"] / math.sqrt(params["d"] + params["lam"])
    constants = SpecBoundConstants.from_kappa(params["kappa"], eta)
    traj = simulate_reduced(isotropic_state(params["rho0"], params["lam"], params["d"]),
                            eta, params["lam"], params["d"], params["steps"], "specgd")
    report = verify_spec_traps(traj, eta, params["lam"], params["d"], constants)
    detail = "no violations" if not report.violations else str(report.first_violation)
    return VerificationItem("spec-traps", {**params, "eta": eta}, report.status, detail)


def _verify_turning_item() -> VerificationItem:
    from .reduced import gd_reduced_step, gd_turning_predicate

    params = {"d": 150, "lam": 12.0, "rho0": 0.02, "steps": 20000}
    eta = gd_safe_eta(params["lam"]) * 0.9
    state = isotropic_state(params["rho0"], params["lam"], params["d"])
    for k in range(params["steps"]):
        pred = gd_turning_predicate(state, params["lam"], params["d"])
        nxt = gd_reduced_step(state, eta, params["lam"], params["d"])
        if pred != (nxt.b <= state.b):
            return VerificationItem("turning-equivalence", {**params, "eta": eta},
                                    "fail", f"mismatch at step {k}")
        state = nxt
    return VerificationItem("turning-equivalence", {**params, "eta": eta}, "pass",
                            f"equivalent on all {params['steps']} steps")


def _verify_reduced_full_item() -> VerificationItem:
    from .covariance import manifold_init, spiked_problem
    from .matrix import gd_step, manifold_coefficients
    from .matrix import specgd_step as mat_spec_step

    params = {"d": 12, "m": 12, "lam": 6.0, "rho0": 0.05, "steps": 200}
    problem = spiked_problem(params["d"], params["m"], params["lam"])
    worst = 0.0
    for algorithm in ALGORITHMS:
        eta = 1e-3 if algorithm == "gd" else 0.05 / math.sqrt(params["d"] + params["lam"])
        theta = math.sqrt(params["rho0"] / (params["d"] + params["lam"]))
        state = manifold_init(params["d"], params["m"], theta)
        reduced = isotropic_state(params["rho0"], params["lam"], params["d"])
        from .reduced import gd_reduced_step, specgd_reduced_step

        for _ in range(params["steps"]):
            if algorithm == "gd":
                state = gd_step(state, problem, eta)
                reduced = gd_reduced_step(reduced, eta, params["lam"], params["d"])
            else:
                state = mat_spec_step(state, problem, eta)
                reduced = specgd_reduced_step(reduced, eta, params["lam"], params["d"])
            got = manifold_coefficients(state, problem)
            worst = max(worst, max(abs(g - e) for g, e in
                                   zip(got, (reduced.a, reduced.b, reduced.c))))
    status = "pass" if worst <= 1e-10 else "fail"
    return VerificationItem("reduced-full-equivalence", params, status,
                            f"max coefficient deviation {worst:.3e}")


_SUITE = {
    "gd-barriers": _verify_gd_barriers_item,
    "spec-traps": _verify_spec_traps_item,
    "turning-equivalence": _verify_turning_item,
    "reduced-full-equivalence": _verify_reduced_full_item,
}


def run_verification_suite(names=None, outpath=None, overrides=None) -> VerificationReport:
    """Run the named invariant checks (all by default); empty list is a no-op.

    ``overrides`` maps an item name to keyword arguments for that check,
    e.g. ``{"gd-barriers": {"eta_scale": 4.0}}`` to run the barrier monitor
    outside its learning-rate precondition (reported as a breach, not a
    failure).
    """
    if names is None:
        names = list(_SUITE)
    unknown = [n for n in names if n not in _SUITE]
    if unknown:
        raise ValueError(f"unknown verification items: {unknown}; "
                         f"available: {sorted(_SUITE)}")
    overrides = overrides or {}
    report = VerificationReport(
        items=[_SUITE[name](**overrides.get(name, {})) for name in names])
    if outpath is not None:
        outpath = Path(outpath)
        outpath.parent.mkdir(parents=True, exist_ok=True)
        payload = report.to_dict()
        payload["config_digest"] = config_digest(
            {"items": [i.name for i in report.items]})
        outpath.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return report
