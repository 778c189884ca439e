"""Finite-sample minibatch training for the phase-retrieval model.

Inputs are x = Q^(1/2) z with z standard normal, labels y = (x^T w)^2 + nu.
The empirical gradient of the batch loss (1/n) sum_i (y_i - x_i^T M x_i)^2 is

    grad = -(4/n) sum_i (y_i - x_i^T M x_i) x_i x_i^T W,

which converges to the population gradient as n grows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import ProblemSpec, SpikedCovariance, polar
from .matrix import WeightState

__all__ = [
    "Batch",
    "BatchSampler",
    "sample_batch",
    "empirical_loss",
    "empirical_gradient",
    "empirical_loss_and_gradient",
    "empirical_gd_step",
    "empirical_specgd_step",
]


@dataclass(frozen=True, eq=False)
class Batch:
    """n input rows and their labels."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("inputs must be (n, d) with labels of length n")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


class BatchSampler:
    """Draws minibatches for one problem, reusing the covariance square root.

    Spiked covariances use the rank-one closed form of Q^(1/2) in O(nd);
    power-law covariances apply the dense square root.
    """

    def __init__(self, problem: ProblemSpec):
        self.problem = problem
        cov = problem.covariance
        if isinstance(cov, SpikedCovariance):
            self._spike = cov.spike_direction
            self._spike_gain = np.sqrt(1.0 + cov.lam) - 1.0
            self._sqrt_q = None
        else:
            self._spike = None
            self._sqrt_q = problem.covariance_sqrt_matrix()

    def sample(self, n: int, seed) -> Batch:
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((n, self.problem.d))
        if self._spike is not None:
            x = z + np.outer(z @ self._spike, self._spike_gain * self._spike)
        else:
            x = z @ self._sqrt_q
        y = (x @ self.problem.target) ** 2
        if self.problem.noise_sigma > 0:
            y = y + self.problem.noise_sigma * rng.standard_normal(n)
        return Batch(inputs=x, labels=y)


def sample_batch(problem: ProblemSpec, n: int, seed) -> Batch:
    """Deterministic batch for (problem, n, seed); see BatchSampler for loops."""
    return BatchSampler(problem).sample(n, seed)


def _residuals(state: WeightState, batch: Batch):
    projections = batch.inputs @ state.W
    fitted = np.einsum("ij,ij->i", projections, projections)
    return batch.labels - fitted, projections


def empirical_loss(state: WeightState, batch: Batch) -> float:
    """Batch average of (y - x^T M x)^2."""
    resid, _ = _residuals(state, batch)
    return float(np.mean(resid**2))


def empirical_loss_and_gradient(state: WeightState, batch: Batch):
    """Loss and gradient in one pass over the batch (shared projections)."""
    if batch.inputs.shape[1] != state.d:
        raise ValueError("batch dimension does not match state")
    resid, projections = _residuals(state, batch)
    loss = float(np.mean(resid**2))
    grad = batch.inputs.T @ (resid[:, None] * projections)
    grad *= -4.0 / batch.n
    return loss, grad


def empirical_gradient(state: WeightState, batch: Batch) -> np.ndarray:
    return empirical_loss_and_gradient(state, batch)[1]


def empirical_gd_step(state: WeightState, batch: Batch, eta: float) -> WeightState:
    if eta <= 0:
        raise ValueError("eta must be > 0")
    return WeightState.from_weights(state.W - eta * empirical_gradient(state, batch))


def empirical_specgd_step(state: WeightState, batch: Batch, eta: float) -> WeightState:
    if eta <= 0:
        raise ValueError("eta must be > 0")
    return WeightState.from_weights(state.W - eta * polar(empirical_gradient(state, batch)))
