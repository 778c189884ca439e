"""Covariance models, initializers, and orthogonalization primitives.

Everything here is a pure function of its arguments plus an explicit seed,
so callers may fan out across processes freely.  All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "SpikedCovariance",
    "PowerLawCovariance",
    "CovarianceSpec",
    "ProblemSpec",
    "build_covariance",
    "covariance_sqrt",
    "power_law_eigensystem",
    "polar",
    "newton_schulz_orthogonalize",
    "haar_orthogonal",
    "stiefel_init",
    "gaussian_init",
    "manifold_init",
    "theta_squared",
    "spiked_problem",
    "power_law_problem",
]

# Unit-norm / orthogonality checks on user-supplied vectors.
UNIT_TOL = 1e-12


def _as_unit_vector(v, d, name):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (d,):
        raise ValueError(f"{name} must have shape ({d},), got {v.shape}")
    if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise ValueError(f"{name} must be a unit vector (|norm - 1| <= {UNIT_TOL})")
    return v


@dataclass(frozen=True, eq=False)
class SpikedCovariance:
    """Isotropic bulk plus one high-variance direction: Q = I + lam * v v^T."""

    dim: int
    lam: float
    spike_direction: np.ndarray

    def __post_init__(self):
        if self.dim < 3:
            raise ValueError("dim must be >= 3 (the bulk must be nonempty)")
        if self.lam < 0:
            raise ValueError("spike strength lam must be >= 0")
        v = _as_unit_vector(self.spike_direction, self.dim, "spike_direction")
        object.__setattr__(self, "spike_direction", v)


@dataclass(frozen=True, eq=False)
class PowerLawCovariance:
    """Eigenvalues proportional to i^(-alpha), normalized so Tr(Q) = dim."""

    dim: int
    alpha: float
    basis_seed: int = 0

    def __post_init__(self):
        if self.dim < 3:
            raise ValueError("dim must be >= 3 (the bulk must be nonempty)")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")


CovarianceSpec = Union[SpikedCovariance, PowerLawCovariance]


def haar_orthogonal(d, seed):
    """Haar-distributed d x d orthogonal matrix (QR with sign-corrected diagonal)."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def power_law_eigensystem(spec: PowerLawCovariance):
    """Eigenvalues (descending) and seeded Haar eigenbasis of a power-law Q."""
    d = spec.dim
    raw = np.arange(1, d + 1, dtype=np.float64) ** (-spec.alpha)
    eigvals = raw * (d / raw.sum())
    basis = haar_orthogonal(d, spec.basis_seed)
    return eigvals, basis


def build_covariance(spec: CovarianceSpec) -> np.ndarray:
    """Dense symmetric positive-definite covariance matrix for ``spec``."""
    if isinstance(spec, SpikedCovariance):
        v = spec.spike_direction
        return np.eye(spec.dim) + spec.lam * np.outer(v, v)
    eigvals, basis = power_law_eigensystem(spec)
    q = (basis * eigvals) @ basis.T
    return 0.5 * (q + q.T)


def covariance_sqrt(spec: CovarianceSpec) -> np.ndarray:
    """Symmetric PSD square root of the covariance matrix.

    The spiked case uses the closed form I + (sqrt(1+lam) - 1) v v^T.
    """
    if isinstance(spec, SpikedCovariance):
        v = spec.spike_direction
        return np.eye(spec.dim) + (np.sqrt(1.0 + spec.lam) - 1.0) * np.outer(v, v)
    eigvals, basis = power_law_eigensystem(spec)
    q = (basis * np.sqrt(eigvals)) @ basis.T
    return 0.5 * (q + q.T)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A phase-retrieval regression instance: y = (x^T w)^2 + noise.

    For a spiked covariance the target is a unit vector orthogonal to the
    spike.  For a power-law covariance the target is normalized in the
    Q^(1/2) metric instead (||Q^(1/2) w|| = 1), so the label variance stays
    of order one; Euclidean unit norm is not required there.
    """

    d: int
    m: int
    target: np.ndarray
    covariance: CovarianceSpec
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.d != self.covariance.dim:
            raise ValueError("d must match covariance.dim")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        w = np.asarray(self.target, dtype=np.float64)
        if w.shape != (self.d,):
            raise ValueError(f"target must have shape ({self.d},)")
        if isinstance(self.covariance, SpikedCovariance):
            w = _as_unit_vector(w, self.d, "target")
            if abs(w @ self.covariance.spike_direction) > UNIT_TOL:
                raise ValueError("target must be orthogonal to the spike direction")
        elif np.linalg.norm(w) == 0.0:
            raise ValueError("target must be nonzero")
        object.__setattr__(self, "target", w)

    @property
    def lam(self) -> float:
        if not isinstance(self.covariance, SpikedCovariance):
            raise AttributeError("lam is only defined for spiked covariances")
        return self.covariance.lam

    def covariance_matrix(self) -> np.ndarray:
        return build_covariance(self.covariance)

    def covariance_sqrt_matrix(self) -> np.ndarray:
        return covariance_sqrt(self.covariance)


def spiked_problem(d, m, lam, sigma=0.0, *, target=None, spike_direction=None):
    """Spiked-covariance instance; defaults to the canonical basis directions."""
    if target is None:
        target = np.zeros(d)
        target[0] = 1.0
    if spike_direction is None:
        spike_direction = np.zeros(d)
        spike_direction[1] = 1.0
    cov = SpikedCovariance(dim=d, lam=float(lam), spike_direction=spike_direction)
    return ProblemSpec(d=d, m=m, target=target, covariance=cov, noise_sigma=sigma)


def power_law_problem(d, m, alpha, sigma=0.0, *, basis_seed=0):
    """Power-law instance with the target in the flattest direction of Q.

    The target is Q^(-1/2) u_min for the minimal-eigenvalue direction u_min,
    which satisfies ||Q^(1/2) w|| = 1 exactly.
    """
    cov = PowerLawCovariance(dim=d, alpha=float(alpha), basis_seed=basis_seed)
    eigvals, basis = power_law_eigensystem(cov)
    u_min = basis[:, np.argmin(eigvals)]
    target = u_min / np.sqrt(eigvals.min())
    return ProblemSpec(d=d, m=m, target=target, covariance=cov, noise_sigma=sigma)


def polar(a: np.ndarray, rank_tol: float = 1e-12) -> np.ndarray:
    """Polar factor A (A^T A)^(-1/2), Moore-Penrose on the null space.

    Computed from a thin SVD; singular directions with s_i <= rank_tol * s_max
    contribute zero, so the result has singular values in {0, 1} and
    polar(0) = 0.  SVD non-convergence surfaces as numpy.linalg.LinAlgError.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("polar expects a 2-D matrix")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        return np.zeros_like(a)
    keep = s > rank_tol * s[0]
    return u[:, keep] @ vt[keep]


def newton_schulz_orthogonalize(a: np.ndarray, iters: int) -> np.ndarray:
    """Cubic Newton-Schulz approximation to the polar factor.

    Pre-normalizes by the Frobenius norm so all singular values land in
    (0, 1], inside the iteration's basin (top singular value < sqrt(3)),
    then applies X <- 1.5 X - 0.5 X X^T X.  Provided for comparison with
    the exact ``polar``; none of the dynamics routines use it.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    a = np.asarray(a, dtype=np.float64)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        raise ValueError("newton_schulz_orthogonalize requires a nonzero matrix")
    x = a / norm
    for _ in range(iters):
        x = 1.5 * x - 0.5 * (x @ (x.T @ x))
    return x


def stiefel_init(d, m, theta, seed):
    """Haar-random scaled orthonormal frame: W = theta * U with U^T U = I_m.

    Requires m <= d.  For m = d this gives W W^T = theta^2 I_d exactly, the
    isotropic on-manifold start used by the population dynamics.
    """
    from .matrix import WeightState

    if theta <= 0:
        raise ValueError("theta must be > 0")
    if m > d:
        raise ValueError("stiefel_init requires m <= d")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((d, m)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return WeightState.from_weights(theta * (q * signs))


def gaussian_init(d, m, theta, seed):
    """i.i.d. N(0, theta^2) entries."""
    from .matrix import WeightState

    if theta <= 0:
        raise ValueError("theta must be > 0")
    rng = np.random.default_rng(seed)
    return WeightState.from_weights(theta * rng.standard_normal((d, m)))


def manifold_init(d, m, theta):
    """The identity frame W = theta I, the exact on-manifold start M = theta^2 I.

    A Haar frame realizes the same Gram matrix only to roundoff, and the
    spectral dynamics amplify that residual exponentially once coefficients
    start oscillating at their traps; cross-validation against the reduced
    recursion therefore uses this exact realization.
    """
    from .matrix import WeightState

    if theta <= 0:
        raise ValueError("theta must be > 0")
    if m != d:
        raise ValueError("the isotropic on-manifold start M = theta^2 I needs m = d")
    return WeightState.from_weights(theta * np.eye(d, m))


def theta_squared(rho0, d, lam=0.0, m=None, rule="mass"):
    """Named initialization scales theta^2 for a given rho0.

    rule="mass":      rho0 / (d + lam), so the initial network mass
                      Tr(M Q) equals rho0 exactly on the manifold.
    rule="ambient":   rho0 / d, the dimension-normalized variant.
    rule="gaussian":  rho0 / (m d), the per-entry variance used with
                      Gaussian initialization in the minibatch experiments.
    """
    if rho0 <= 0:
        raise ValueError("rho0 must be > 0")
    if rule == "mass":
        return rho0 / (d + lam)
    if rule == "ambient":
        return rho0 / d
    if rule == "gaussian":
        if m is None:
            raise ValueError("rule='gaussian' needs m")
        return rho0 / (m * d)
    raise ValueError(f"unknown rule {rule!r}")
