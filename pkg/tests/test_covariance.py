"""Covariance construction, polar decomposition, and initializers."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specdyn import (
    PowerLawCovariance,
    ProblemSpec,
    SpikedCovariance,
    build_covariance,
    covariance_sqrt,
    gaussian_init,
    newton_schulz_orthogonalize,
    polar,
    power_law_eigensystem,
    spiked_problem,
    stiefel_init,
    theta_squared,
)


def unit(d, idx):
    e = np.zeros(d)
    e[idx] = 1.0
    return e


def inv_sqrt_psd(mat):
    """Independent route to M^(-1/2) through an eigendecomposition."""
    vals, vecs = np.linalg.eigh(mat)
    return (vecs / np.sqrt(vals)) @ vecs.T


class TestBuildCovariance:
    def test_spiked_canonical(self):
        q = build_covariance(SpikedCovariance(3, 2.0, unit(3, 2)))
        np.testing.assert_allclose(q, np.diag([1.0, 1.0, 3.0]), atol=1e-15)

    def test_zero_spike_is_identity(self):
        q = build_covariance(SpikedCovariance(5, 0.0, unit(5, 0)))
        np.testing.assert_allclose(q, np.eye(5), atol=0)

    def test_power_law_eigenvalues_match_hand_normalization(self):
        # lambda_i = d * i^(-alpha) / sum_j j^(-alpha), worked out for d=4, alpha=2
        raw = np.array([1.0, 1.0 / 4.0, 1.0 / 9.0, 1.0 / 16.0])
        expected = 4.0 * raw / raw.sum()
        eigvals, basis = power_law_eigensystem(PowerLawCovariance(4, 2.0, basis_seed=3))
        np.testing.assert_allclose(eigvals, expected, rtol=1e-15)
        q = build_covariance(PowerLawCovariance(4, 2.0, basis_seed=3))
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(q)),
                                   np.sort(expected), rtol=1e-12)

    def test_dimension_too_small_rejected(self):
        with pytest.raises(ValueError):
            SpikedCovariance(2, 2.0, unit(2, 1))

    def test_non_unit_spike_rejected(self):
        with pytest.raises(ValueError):
            SpikedCovariance(4, 1.0, 2.0 * unit(4, 1))

    def test_nonpositive_alpha_rejected(self):
        with pytest.raises(ValueError):
            PowerLawCovariance(4, 0.0)

    @pytest.mark.parametrize("spec", [
        SpikedCovariance(7, 5.0, unit(7, 3)),
        PowerLawCovariance(9, 1.5, basis_seed=1),
    ])
    def test_symmetry_and_positive_definiteness(self, spec):
        q = build_covariance(spec)
        np.testing.assert_allclose(q, q.T, atol=1e-12)
        eigs = np.linalg.eigvalsh(q)
        if isinstance(spec, SpikedCovariance):
            assert eigs.min() >= 1.0 - 1e-10
        else:
            assert eigs.min() > 0

    def test_trace_normalization(self):
        spiked = build_covariance(SpikedCovariance(6, 4.0, unit(6, 1)))
        assert abs(np.trace(spiked) - (6 + 4.0)) <= 1e-12 * 10
        plaw = build_covariance(PowerLawCovariance(50, 2.0, basis_seed=0))
        assert abs(np.trace(plaw) - 50) / 50 <= 1e-12


class TestCovarianceSqrt:
    def test_spiked_closed_form(self):
        root = covariance_sqrt(SpikedCovariance(3, 3.0, unit(3, 2)))
        np.testing.assert_allclose(root, np.diag([1.0, 1.0, 2.0]), atol=1e-15)

    def test_zero_spike(self):
        np.testing.assert_allclose(
            covariance_sqrt(SpikedCovariance(4, 0.0, unit(4, 0))), np.eye(4), atol=0)

    @pytest.mark.parametrize("spec", [
        SpikedCovariance(8, 11.0, unit(8, 5)),
        PowerLawCovariance(4, 2.0, basis_seed=7),
        PowerLawCovariance(40, 1.2, basis_seed=2),
    ])
    def test_squares_back_to_covariance(self, spec):
        root = covariance_sqrt(spec)
        q = build_covariance(spec)
        assert np.linalg.norm(root @ root - q) <= 1e-10


class TestPolar:
    def test_identity_fixed_point(self):
        np.testing.assert_allclose(polar(np.eye(3)), np.eye(3), atol=1e-14)

    def test_diagonal_signs(self):
        np.testing.assert_allclose(polar(np.diag([3.0, -2.0])),
                                   np.diag([1.0, -1.0]), atol=1e-14)

    def test_full_rank_matches_independent_construction(self):
        rng = np.random.default_rng(42)
        a = rng.standard_normal((4, 3))
        p = polar(a)
        np.testing.assert_allclose(p.T @ p, np.eye(3), atol=1e-10)
        np.testing.assert_allclose(p, a @ inv_sqrt_psd(a.T @ a), atol=1e-10)

    def test_zero_matrix_maps_to_zero(self):
        np.testing.assert_array_equal(polar(np.zeros((3, 2))), np.zeros((3, 2)))

    def test_rank_deficient_singular_values_in_01(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((5, 2)) @ rng.standard_normal((2, 4))
        s = np.linalg.svd(polar(a), compute_uv=False)
        assert np.all((np.abs(s - 1.0) <= 1e-10) | (np.abs(s) <= 1e-10))
        assert np.sum(s > 0.5) == 2

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 6), st.integers(2, 6))
    def test_idempotence_and_orthogonality(self, seed, d, m):
        a = np.random.default_rng(seed).standard_normal((d, m))
        p = polar(a)
        np.testing.assert_allclose(polar(p), p, atol=1e-10)
        if m <= d:
            np.testing.assert_allclose(p.T @ p, np.eye(m), atol=1e-10)


class TestNewtonSchulz:
    def test_orthonormal_input_is_fixed_point(self):
        # Frobenius pre-scaling shrinks an orthonormal frame to 1/sqrt(m) of
        # itself, so exact fixedness holds once the iteration has re-converged
        # (a handful of steps), not for tiny iteration counts.
        q = np.linalg.qr(np.random.default_rng(3).standard_normal((5, 3)))[0]
        for iters in (6, 12, 25):
            np.testing.assert_allclose(
                newton_schulz_orthogonalize(q, iters), q, atol=1e-10)

    def test_diagonal_converges_to_polar(self):
        a = np.diag([2.0, 0.5])
        out = newton_schulz_orthogonalize(a, 15)
        np.testing.assert_allclose(out, np.eye(2), atol=1e-6)

    def test_random_matrix_close_to_polar(self):
        a = np.random.default_rng(8).standard_normal((6, 4))
        out = newton_schulz_orthogonalize(a, 12)
        assert np.linalg.norm(out - polar(a)) <= 1e-3

    def test_zero_matrix_rejected(self):
        with pytest.raises(ValueError):
            newton_schulz_orthogonalize(np.zeros((3, 3)), 5)


class TestInitializers:
    def test_square_stiefel_gives_isotropic_gram(self):
        state = stiefel_init(4, 4, 0.1, seed=0)
        np.testing.assert_allclose(state.M, 0.01 * np.eye(4), atol=1e-12)

    def test_stiefel_seed_determinism(self):
        w1 = stiefel_init(6, 3, 1.0, seed=123).W
        w2 = stiefel_init(6, 3, 1.0, seed=123).W
        np.testing.assert_array_equal(w1, w2)

    def test_rectangular_stiefel_has_orthonormal_columns(self):
        state = stiefel_init(4, 2, 1.0, seed=5)
        np.testing.assert_allclose(state.W.T @ state.W, np.eye(2), atol=1e-12)

    def test_stiefel_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            stiefel_init(4, 4, 0.0, seed=0)
        with pytest.raises(ValueError):
            stiefel_init(3, 4, 1.0, seed=0)

    def test_gaussian_seed_determinism(self):
        np.testing.assert_array_equal(gaussian_init(10, 10, 0.3, seed=9).W,
                                      gaussian_init(10, 10, 0.3, seed=9).W)

    def test_gaussian_sample_variance(self):
        theta = 0.2
        w = gaussian_init(100, 100, theta, seed=21).W
        assert abs(w.var() - theta**2) / theta**2 <= 0.05

    def test_gaussian_scale_preset_matches_minibatch_experiments(self):
        # theta^2 = rho0 / (m d) at the published operating point
        assert theta_squared(1e-2, d=300, m=100, rule="gaussian") == pytest.approx(
            1e-2 / (100 * 300), rel=1e-15)

    def test_mass_preset_puts_initial_mass_at_rho0(self):
        theta2 = theta_squared(0.05, d=16, lam=8.0, rule="mass")
        assert (16 + 8.0) * theta2 == pytest.approx(0.05, rel=1e-15)


class TestProblemSpec:
    def test_spiked_requires_orthogonal_unit_target(self):
        with pytest.raises(ValueError):
            ProblemSpec(d=4, m=2, target=2 * unit(4, 0),
                        covariance=SpikedCovariance(4, 1.0, unit(4, 1)))
        with pytest.raises(ValueError):
            ProblemSpec(d=4, m=2, target=unit(4, 1),
                        covariance=SpikedCovariance(4, 1.0, unit(4, 1)))

    def test_canonical_builder(self):
        p = spiked_problem(5, 3, 7.0, sigma=0.2)
        assert p.lam == 7.0
        assert p.target @ p.covariance.spike_direction == 0.0
        assert p.noise_sigma == 0.2
