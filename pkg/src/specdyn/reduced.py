"""Exact three-coefficient dynamics on the invariant manifold.

On a spiked covariance the population dynamics of both algorithms preserve
the family M = a w w^T + b v v^T + c P_perp, so the whole trajectory is
three nonnegative scalars.  The discrete recursions here are exact, not
discretizations: GD multiplies each coefficient by a squared affine factor,
and spectral GD takes unit steps in the square-root variables

    alpha' = |alpha - eta * sgn(g_w)|,   a = alpha^2,  sgn(0) := 0,

with the same for (beta, b) and (gamma, c).  The drivers are the three
eigenvalues of the gradient matrix on the signal/spike/bulk blocks:

    g_w    = 4 (r + 2a - 3)
    g_v    = 4 (1+lam) (r + 2(1+lam) b - 1)
    g_perp = 4 (r + 2c - 1)

where r = a + (1+lam) b + (d-2) c is the network mass Tr(M Q).

Also here: stage-time detection, the GD barrier monitor (a <= 1,
(1+lam)b <= 1/3, (d-2)c <= 1), the spectral trap monitor, and explicit
Euler integrators for the two continuous flows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "ReducedState",
    "PreGradients",
    "StageThresholds",
    "StageTimes",
    "SpecBoundConstants",
    "ReducedTrajectory",
    "isotropic_state",
    "pre_gradients",
    "gd_reduced_step",
    "specgd_reduced_step",
    "gd_turning_predicate",
    "gd_flow_step",
    "spec_flow_step",
    "reduced_loss",
    "reduced_alignment",
    "simulate_reduced",
    "detect_stages",
    "BarrierReport",
    "SpecTrapReport",
    "verify_gd_barriers",
    "verify_spec_traps",
    "gd_safe_eta",
]

# Headroom for accumulated rounding when asserting analytically exact bounds.
FP_TOL = 1e-12


@dataclass(frozen=True)
class ReducedState:
    """Coefficients of M = a w w^T + b v v^T + c P_perp (all nonnegative)."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if self.a < 0 or self.b < 0 or self.c < 0:
            raise ValueError("reduced coefficients must be nonnegative")

    def mass(self, lam: float, d: int) -> float:
        """Network mass r = Tr(M Q) = a + (1+lam) b + (d-2) c."""
        return self.a + (1.0 + lam) * self.b + (d - 2) * self.c

    def spike_mass(self, lam: float) -> float:
        return (1.0 + lam) * self.b

    def bulk_mass(self, d: int) -> float:
        return (d - 2) * self.c

    def turning_level(self, d: int) -> float:
        """K = (1 - a - (d-2) c) / 3, the spike-mass level where b stops growing."""
        return (1.0 - self.a - (d - 2) * self.c) / 3.0


def isotropic_state(rho0: float, lam: float, d: int) -> ReducedState:
    """a = b = c = rho0 / (d + lam): the on-manifold start with mass r(0) = rho0."""
    mu = rho0 / (d + lam)
    return ReducedState(mu, mu, mu)


@dataclass(frozen=True)
class PreGradients:
    """Eigenvalues of the gradient matrix on the three invariant blocks."""

    g_wstar: float
    g_v: float
    g_perp: float


def pre_gradients(state: ReducedState, lam: float, d: int) -> PreGradients:
    if d < 3:
        raise ValueError("d must be >= 3")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    r = state.mass(lam, d)
    return PreGradients(
        g_wstar=4.0 * (r + 2.0 * state.a - 3.0),
        g_v=4.0 * (1.0 + lam) * (r + 2.0 * (1.0 + lam) * state.b - 1.0),
        g_perp=4.0 * (r + 2.0 * state.c - 1.0),
    )


def gd_reduced_step(state: ReducedState, eta: float, lam: float, d: int) -> ReducedState:
    """One exact GD update: each coefficient times a squared affine bracket."""
    if eta <= 0:
        raise ValueError("eta must be > 0")
    a, b, c = state.a, state.b, state.c
    r = a + (1.0 + lam) * b + (d - 2) * c
    a_next = a * (1.0 + 4.0 * eta * (3.0 - 2.0 * a - r)) ** 2
    b_next = b * (1.0 + 4.0 * eta * (1.0 + lam) * ((1.0 - r) - 2.0 * (1.0 + lam) * b)) ** 2
    c_next = c * (1.0 + 4.0 * eta * ((1.0 - r) - 2.0 * c)) ** 2
    return ReducedState(a_next, b_next, c_next)


def _sign(x: float) -> float:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


def specgd_reduced_step(state: ReducedState, eta: float, lam: float, d: int) -> ReducedState:
    """One exact spectral-GD update in square-root variables.

    A coordinate sitting at exactly zero stays at zero (its row of the
    gradient factor vanishes, so the polar factor contributes nothing).
    """
    if eta <= 0:
        raise ValueError("eta must be > 0")
    g = pre_gradients(state, lam, d)

    def advance(x: float, gx: float) -> float:
        if x == 0.0:
            return 0.0
        s = _sign(gx)
        if s == 0.0:
            return x
        return abs(math.sqrt(x) - eta * s) ** 2

    return ReducedState(
        advance(state.a, g.g_wstar),
        advance(state.b, g.g_v),
        advance(state.c, g.g_perp),
    )


def gd_turning_predicate(state: ReducedState, lam: float, d: int) -> bool:
    """True once the spike mass has reached the turning level: B >= K.

    Under the learning-rate bound eta <= 1/(16(1+lam)) this is equivalent
    to the next GD update not increasing b.
    """
    return state.spike_mass(lam) >= state.turning_level(d)


def gd_safe_eta(lam: float) -> float:
    """Largest learning rate under which the GD barrier analysis applies."""
    return min(1.0 / 24.0, 1.0 / (16.0 * (1.0 + lam)))


def gd_flow_step(state: ReducedState, h: float, lam: float, d: int) -> ReducedState:
    """Explicit Euler step of the gradient flow da/dt = -2 g_w a, etc."""
    if h <= 0:
        raise ValueError("h must be > 0")
    g = pre_gradients(state, lam, d)
    return ReducedState(
        max(state.a - 2.0 * h * g.g_wstar * state.a, 0.0),
        max(state.b - 2.0 * h * g.g_v * state.b, 0.0),
        max(state.c - 2.0 * h * g.g_perp * state.c, 0.0),
    )


def spec_flow_step(state: ReducedState, h: float, lam: float, d: int) -> ReducedState:
    """Euler step of the spectral flow in square-root variables.

    The discrete recursion *is* the Euler scheme for d(alpha)/dt = -sgn(g_w),
    so this simply delegates with step size h.
    """
    return specgd_reduced_step(state, h, lam, d)


def reduced_loss(state: ReducedState, lam: float, d: int, sigma: float = 0.0) -> float:
    """Population loss restricted to the manifold.

    The eigenvalues of CQ are a-1, (1+lam) b, and c with multiplicity d-2,
    so L = 2[(a-1)^2 + (1+lam)^2 b^2 + (d-2) c^2] + (r-1)^2 + sigma^2.
    """
    if d < 3:
        raise ValueError("d must be >= 3")
    a, b, c = state.a, state.b, state.c
    r = state.mass(lam, d)
    quad = (a - 1.0) ** 2 + ((1.0 + lam) * b) ** 2 + (d - 2) * c**2
    return 2.0 * quad + (r - 1.0) ** 2 + sigma**2


def reduced_alignment(state: ReducedState, d: int) -> float:
    """Frobenius cosine with the teacher: a / sqrt(a^2 + b^2 + (d-2) c^2)."""
    denom = math.sqrt(state.a**2 + state.b**2 + (d - 2) * state.c**2)
    if denom == 0.0:
        raise ValueError("alignment is undefined for the zero state")
    return min(state.a / denom, 1.0)


@dataclass(frozen=True)
class StageThresholds:
    """Detection levels for the stage times.

    rho is the escape level for the mass r, epsilon the band around r = 1,
    delta the macroscopic signal level, and kappa the spectral step-size
    constant (eta = kappa / sqrt(d + lam)).
    """

    rho: float = 1.0 / 24.0
    epsilon: float = 0.1
    delta: float = 0.1
    kappa: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0 / 12.0:
            raise ValueError("rho must lie in (0, 1/12)")
        if not 0.0 < self.epsilon <= 0.25:
            raise ValueError("epsilon must lie in (0, 1/4]")
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")


@dataclass(frozen=True)
class StageTimes:
    """First-hitting step indices; None marks a condition never reached.

    T1a: escape, first r >= rho.
    T1:  turning, first b_{k+1} <= b_k at or after T1a.
    T2a: first r >= 1 - epsilon at or after T1.
    T2:  first a >= delta at or after T2a.
    nprime1 / nprime2: the spectral thresholds, first r + 2(1+lam) b >= 1
    and first a >= A0(kappa).
    """

    T1a: Optional[int] = None
    T1: Optional[int] = None
    T2a: Optional[int] = None
    T2: Optional[int] = None
    nprime1: Optional[int] = None
    nprime2: Optional[int] = None


@dataclass(frozen=True)
class SpecBoundConstants:
    """Trap and floor constants for spectral GD at eta = kappa / sqrt(d+lam).

    C_b bounds the spike mass (1+lam) b, C_c the bulk mass (d-2) c; the
    signal floor after the hitting time nprime2 is A_floor = (sqrt(A0)-eta)^2.
    """

    kappa: float
    eta: float
    C_b: float
    C_c: float
    C_noise: float
    A0: float
    A_floor: float

    @classmethod
    def from_kappa(cls, kappa: float, eta: float) -> "SpecBoundConstants":
        if kappa <= 0:
            raise ValueError("kappa must be > 0")
        if eta <= 0:
            raise ValueError("eta must be > 0")
        c_b = (kappa + 1.0 / math.sqrt(3.0)) ** 2
        c_c = (1.0 + kappa) ** 2
        c_noise = c_b + c_c
        a0 = 1.0 - c_noise / 3.0
        if a0 <= 0:
            raise ValueError(
                f"A0 = 1 - C_noise/3 = {a0:.6g} <= 0: kappa = {kappa} is too large "
                "for the signal-floor analysis"
            )
        return cls(
            kappa=kappa,
            eta=eta,
            C_b=c_b,
            C_c=c_c,
            C_noise=c_noise,
            A0=a0,
            A_floor=(math.sqrt(a0) - eta) ** 2,
        )

    def alignment_gap_bound(self, lam: float, d: int) -> float:
        """Upper bound on 1 - Align(k) valid for all k >= nprime2."""
        return (self.C_b**2 / (1.0 + lam) ** 2 + self.C_c**2 / (d - 2)) / (
            2.0 * self.A_floor**2
        )


class ReducedTrajectory:
    """Arrays of (a, b, c) over steps 0..T plus the run's (lam, d, eta)."""

    def __init__(self, a, b, c, lam, d, eta, algorithm):
        self.a = np.asarray(a, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        self.c = np.asarray(c, dtype=np.float64)
        if not (self.a.shape == self.b.shape == self.c.shape) or self.a.ndim != 1:
            raise ValueError("a, b, c must be 1-D arrays of equal length")
        if self.a.size == 0:
            raise ValueError("trajectory must be non-empty")
        self.lam = float(lam)
        self.d = int(d)
        self.eta = float(eta)
        self.algorithm = algorithm

    def __len__(self):
        return self.a.size

    def state(self, k: int) -> ReducedState:
        return ReducedState(float(self.a[k]), float(self.b[k]), float(self.c[k]))

    @property
    def spike_mass(self):
        return (1.0 + self.lam) * self.b

    @property
    def bulk_mass(self):
        return (self.d - 2) * self.c

    @property
    def mass(self):
        return self.a + self.spike_mass + self.bulk_mass

    @property
    def turning_level(self):
        return (1.0 - self.a - self.bulk_mass) / 3.0

    @property
    def alignment(self):
        denom = np.sqrt(self.a**2 + self.b**2 + (self.d - 2) * self.c**2)
        return np.minimum(np.divide(self.a, denom, out=np.ones_like(self.a), where=denom > 0), 1.0)

    def loss(self, sigma: float = 0.0):
        quad = (self.a - 1.0) ** 2 + self.spike_mass**2 + (self.d - 2) * self.c**2
        return 2.0 * quad + (self.mass - 1.0) ** 2 + sigma**2

    def pre_gradient_arrays(self):
        r = self.mass
        g_w = 4.0 * (r + 2.0 * self.a - 3.0)
        g_v = 4.0 * (1.0 + self.lam) * (r + 2.0 * (1.0 + self.lam) * self.b - 1.0)
        g_p = 4.0 * (r + 2.0 * self.c - 1.0)
        return g_w, g_v, g_p


def simulate_reduced(
    init: ReducedState,
    eta: float,
    lam: float,
    d: int,
    steps: int,
    algorithm: str,
) -> ReducedTrajectory:
    """Iterate the exact recursion for ``steps`` updates (records steps+1 states)."""
    if algorithm == "gd":
        step = gd_reduced_step
    elif algorithm == "specgd":
        step = specgd_reduced_step
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    a_hist = np.empty(steps + 1)
    b_hist = np.empty(steps + 1)
    c_hist = np.empty(steps + 1)
    state = init
    a_hist[0], b_hist[0], c_hist[0] = state.a, state.b, state.c
    for k in range(steps):
        state = step(state, eta, lam, d)
        a_hist[k + 1], b_hist[k + 1], c_hist[k + 1] = state.a, state.b, state.c
    return ReducedTrajectory(a_hist, b_hist, c_hist, lam, d, eta, algorithm)


def _first_index(condition: np.ndarray, start: int = 0) -> Optional[int]:
    hits = np.nonzero(condition[start:])[0]
    if hits.size == 0:
        return None
    return int(hits[0]) + start


def detect_stages(
    traj: ReducedTrajectory,
    thresholds: StageThresholds = StageThresholds(),
    algorithm: Optional[str] = None,
) -> StageTimes:
    """Single scan for the first-hitting stage times.

    Every time is the first index satisfying its condition subject to its
    ordering constraint; a condition never reached stays None so downstream
    fits can drop unfinished runs instead of absorbing the horizon.
    """
    algorithm = algorithm or traj.algorithm
    r = traj.mass
    t1a = _first_index(r >= thresholds.rho)

    t1 = None
    if t1a is not None and len(traj) >= 2:
        turned = traj.b[1:] <= traj.b[:-1]
        t1 = _first_index(turned, start=t1a)

    t2a = None
    if t1 is not None:
        t2a = _first_index(r >= 1.0 - thresholds.epsilon, start=t1)

    t2 = None
    if t2a is not None:
        t2 = _first_index(traj.a >= thresholds.delta, start=t2a)

    np1 = np2 = None
    if algorithm == "specgd":
        np1 = _first_index(r + 2.0 * (1.0 + traj.lam) * traj.b >= 1.0)
        constants = SpecBoundConstants.from_kappa(thresholds.kappa, traj.eta)
        np2 = _first_index(traj.a >= constants.A0)

    return StageTimes(T1a=t1a, T1=t1, T2a=t2a, T2=t2, nprime1=np1, nprime2=np2)


@dataclass(frozen=True)
class Violation:
    step: int
    quantity: str
    value: float
    bound: float


def _report_status(precondition_ok: bool, violations) -> str:
    if not precondition_ok:
        return "precondition-breach"
    return "pass" if not violations else "fail"


@dataclass(frozen=True)
class BarrierReport:
    """Outcome of the GD barrier scan a <= 1, B <= 1/3, C <= 1, r <= 7/3."""

    precondition_ok: bool
    breaches: tuple
    violations: tuple
    steps_checked: int

    @property
    def status(self) -> str:
        return _report_status(self.precondition_ok, self.violations)

    @property
    def first_violation(self) -> Optional[Violation]:
        return self.violations[0] if self.violations else None


def _collect_violations(values: np.ndarray, bound: float, name: str, tol: float):
    bad = np.nonzero(values > bound + tol)[0]
    return [Violation(int(k), name, float(values[k]), bound) for k in bad]


def verify_gd_barriers(
    traj: ReducedTrajectory,
    eta: float,
    lam: float,
    d: int,
    fp_tol: float = FP_TOL,
) -> BarrierReport:
    """Check the forward-invariant region of the GD recursion along a run.

    The initial point must lie inside [0,1] x [0,1/3] x [0,1] in
    (a, B, C) coordinates: that is the monitor's contract, not a theorem,
    so a bad start raises.  A learning rate above min{1/24, 1/(16(1+lam))}
    is recorded as a precondition breach and any excursions are then
    reported as breach diagnostics rather than theory failures.

    fp_tol absorbs last-ulp rounding in the squared-bracket products; the
    analytic bounds themselves are asserted exactly otherwise.
    """
    if d < 4:
        raise ValueError("barrier certificate requires d >= 4")
    a0, bm0, cm0 = traj.a[0], (1.0 + lam) * traj.b[0], (d - 2) * traj.c[0]
    if a0 > 1.0 or bm0 > 1.0 / 3.0 or cm0 > 1.0:
        raise ValueError(
            f"initial point (a, B, C) = ({a0:.4g}, {bm0:.4g}, {cm0:.4g}) lies outside "
            "the invariant region [0,1] x [0,1/3] x [0,1]"
        )

    breaches = []
    eta_max = gd_safe_eta(lam)
    if eta > eta_max:
        breaches.append(f"eta = {eta:.6g} exceeds the barrier bound {eta_max:.6g}")

    spike = (1.0 + lam) * traj.b
    bulk = (d - 2) * traj.c
    violations = (
        _collect_violations(traj.a, 1.0, "a", fp_tol)
        + _collect_violations(spike, 1.0 / 3.0, "spike_mass", fp_tol)
        + _collect_violations(bulk, 1.0, "bulk_mass", fp_tol)
        + _collect_violations(traj.a + spike + bulk, 7.0 / 3.0, "mass", fp_tol)
    )
    violations.sort(key=lambda v: v.step)
    return BarrierReport(
        precondition_ok=not breaches,
        breaches=tuple(breaches),
        violations=tuple(violations),
        steps_checked=len(traj),
    )


@dataclass(frozen=True)
class SpecTrapReport:
    """Outcome of the spectral trap/floor/alignment scan."""

    precondition_ok: bool
    breaches: tuple
    violations: tuple
    steps_checked: int
    nprime2: Optional[int]

    @property
    def status(self) -> str:
        return _report_status(self.precondition_ok, self.violations)

    @property
    def first_violation(self) -> Optional[Violation]:
        return self.violations[0] if self.violations else None


def verify_spec_traps(
    traj: ReducedTrajectory,
    eta: float,
    lam: float,
    d: int,
    constants: SpecBoundConstants,
    fp_tol: float = FP_TOL,
) -> SpecTrapReport:
    """Check the spectral-GD nuisance traps, signal floor, and alignment gap.

    For every step: (1+lam) b <= C_b and (d-2) c <= C_c.  From the first
    index with a >= A0 onward: a >= (sqrt(A0) - eta)^2 and
    1 - Align <= (C_b^2/(1+lam)^2 + C_c^2/(d-2)) / (2 A_floor^2).
    """
    breaches = []
    expected_eta = constants.kappa / math.sqrt(d + lam)
    if abs(eta - expected_eta) > 1e-12 * max(1.0, expected_eta):
        breaches.append(
            f"eta = {eta:.6g} is not kappa/sqrt(d+lam) = {expected_eta:.6g} "
            f"for kappa = {constants.kappa}"
        )

    spike = (1.0 + lam) * traj.b
    bulk = (d - 2) * traj.c
    violations = _collect_violations(spike, constants.C_b, "spike_mass", fp_tol)
    violations += _collect_violations(bulk, constants.C_c, "bulk_mass", fp_tol)

    np2 = _first_index(traj.a >= constants.A0)
    if np2 is not None:
        tail = traj.a[np2:]
        low = np.nonzero(tail < constants.A_floor - fp_tol)[0]
        violations += [
            Violation(int(k) + np2, "signal_floor", float(tail[k]), constants.A_floor)
            for k in low
        ]
        gap = 1.0 - traj.alignment[np2:]
        bound = constants.alignment_gap_bound(lam, d)
        high = np.nonzero(gap > bound + fp_tol)[0]
        violations += [
            Violation(int(k) + np2, "alignment_gap", float(gap[k]), bound) for k in high
        ]

    violations.sort(key=lambda v: v.step)
    return SpecTrapReport(
        precondition_ok=not breaches,
        breaches=tuple(breaches),
        violations=tuple(violations),
        steps_checked=len(traj),
        nprime2=np2,
    )
