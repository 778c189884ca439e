"""Full-matrix population dynamics for the quadratic teacher model.

The loss admits the closed form

    L(W) = 2 Tr((QC)^2) + Tr(CQ)^2 + sigma^2,      C = W W^T - w w^T,

so the population gradient G(M) W with G(M) = 8 QCQ + 4 Tr(CQ) Q is exact:
no sampling enters anywhere in this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import PowerLawCovariance, ProblemSpec, SpikedCovariance, polar

__all__ = [
    "WeightState",
    "PopulationGradient",
    "population_loss",
    "population_gradient",
    "gd_step",
    "specgd_step",
    "alignment",
    "manifold_projection_residual",
    "manifold_coefficients",
]


@dataclass(frozen=True, eq=False)
class WeightState:
    """A d x m factor W together with its Gram matrix M = W W^T.

    M is recomputed (and symmetrized against roundoff) whenever a new state
    is constructed, so the cache is always fresh.
    """

    W: np.ndarray
    M: np.ndarray

    @classmethod
    def from_weights(cls, w) -> "WeightState":
        w = np.asarray(w, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError("W must be a 2-D matrix")
        m = w @ w.T
        m = 0.5 * (m + m.T)
        return cls(W=w, M=m)

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def m(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True, eq=False)
class PopulationGradient:
    """G(M) = 8 QCQ + 4 Tr(CQ) Q and the full gradient G(M) W."""

    G: np.ndarray
    full_gradient: np.ndarray


def _check_dims(state: WeightState, problem: ProblemSpec):
    if state.d != problem.d:
        raise ValueError(f"state has d={state.d}, problem has d={problem.d}")


def _error_matrix(state: WeightState, problem: ProblemSpec):
    w = problem.target
    return state.M - np.outer(w, w)


def population_loss(state: WeightState, problem: ProblemSpec) -> float:
    """Exact population value of E(y - x^T M x)^2."""
    _check_dims(state, problem)
    q = problem.covariance_matrix()
    c = _error_matrix(state, problem)
    qc = q @ c
    return float(2.0 * np.sum(qc * qc.T) + np.sum(c * q) ** 2 + problem.noise_sigma**2)


def population_gradient(state: WeightState, problem: ProblemSpec) -> PopulationGradient:
    _check_dims(state, problem)
    q = problem.covariance_matrix()
    c = _error_matrix(state, problem)
    g = 8.0 * (q @ c @ q) + 4.0 * np.sum(c * q) * q
    g = 0.5 * (g + g.T)
    return PopulationGradient(G=g, full_gradient=g @ state.W)


def gd_step(state: WeightState, problem: ProblemSpec, eta: float) -> WeightState:
    """W <- W - eta G(M) W (equivalently M <- (I - eta G) M (I - eta G))."""
    if eta <= 0:
        raise ValueError("eta must be > 0")
    grad = population_gradient(state, problem)
    return WeightState.from_weights(state.W - eta * grad.full_gradient)


def specgd_step(state: WeightState, problem: ProblemSpec, eta: float) -> WeightState:
    """W <- W - eta polar(G(M) W); scale information in the gradient is discarded."""
    if eta <= 0:
        raise ValueError("eta must be > 0")
    grad = population_gradient(state, problem)
    return WeightState.from_weights(state.W - eta * polar(grad.full_gradient))


def alignment(state: WeightState, problem: ProblemSpec) -> float:
    """Frobenius cosine between M and the rank-one teacher matrix w w^T."""
    _check_dims(state, problem)
    norm_m = np.linalg.norm(state.M)
    if norm_m == 0.0:
        raise ValueError("alignment is undefined for M = 0")
    w = problem.target
    value = (w @ state.M @ w) / (norm_m * (w @ w))
    return float(min(max(value, 0.0), 1.0))


def manifold_coefficients(state: WeightState, problem: ProblemSpec):
    """Projections (a, b, c) of M onto the signal/spike/bulk directions."""
    if not isinstance(problem.covariance, SpikedCovariance):
        raise ValueError("manifold coefficients require a spiked covariance")
    _check_dims(state, problem)
    w = problem.target
    v = problem.covariance.spike_direction
    a = float(w @ state.M @ w)
    b = float(v @ state.M @ v)
    c = float((np.trace(state.M) - a - b) / (state.d - 2))
    return a, b, c


def manifold_projection_residual(state: WeightState, problem: ProblemSpec) -> float:
    """Frobenius distance from M to its projection onto the invariant manifold.

    A numerical certificate that trajectories started on the manifold
    a w w^T + b v v^T + c P_perp stay there.
    """
    if isinstance(problem.covariance, PowerLawCovariance):
        raise ValueError("no three-dimensional invariant manifold for power-law covariances")
    a, b, c = manifold_coefficients(state, problem)
    w = problem.target
    v = problem.covariance.spike_direction
    p_perp = np.eye(state.d) - np.outer(w, w) - np.outer(v, v)
    recon = a * np.outer(w, w) + b * np.outer(v, v) + c * p_perp
    return float(np.linalg.norm(state.M - recon))
