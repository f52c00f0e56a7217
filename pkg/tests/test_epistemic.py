from math import factorial, sqrt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import hermite_e as H

from epigpc.epistemic import (
    rescale, rescale_matrix, rescale_matrix_1d, surrogate_coeffs, surrogate_moments,
    surrogate_sample, tau_sweep, zero_even_coeffs,
)
from epigpc.estimators import GpcSurrogate
from epigpc.models import FunctionModel, SyntheticModel
from epigpc.polychaos import (GpcExpansion, basis_matrix, gpc_eval, gpc_eval_many, gpc_moments,
                              index_array, total_degree_indices)
from epigpc.sparsegrid import smolyak

taus = st.floats(0.05, 1.0)


def _oracle_1d(N, tau):
    """t[n, m] from monomial expansions and a 60-point Gauss rule (independent path)."""
    x, w = H.hermegauss(60)
    w = w / w.sum()
    t = np.zeros((N + 1, N + 1))
    for n in range(N + 1):
        cn = np.zeros(n + 1)
        cn[n] = 1 / sqrt(factorial(n))
        for m in range(N + 1):
            cm = np.zeros(m + 1)
            cm[m] = 1 / sqrt(factorial(m))
            t[n, m] = np.sum(w * H.hermeval(x, cn) * H.hermeval(tau * x, cm))
    return t


def _random_expansion(rng, d, N, P=3):
    idx = total_degree_indices(d, N)
    return GpcExpansion(d, N, rng.standard_normal((len(idx), P)), np.arange(P, dtype=float))


class TestOneDim:
    def test_identity(self):
        np.testing.assert_array_equal(rescale_matrix_1d(4, 1.0), np.eye(5))

    @given(taus)
    def test_closed_forms(self, tau):
        t = rescale_matrix_1d(3, tau)
        assert t[1, 1] == pytest.approx(tau, rel=1e-13)
        assert t[0, 2] == pytest.approx((tau**2 - 1) / sqrt(2), rel=1e-12, abs=1e-15)
        assert abs(t[1, 2]) < 1e-15

    @pytest.mark.parametrize("N", [1, 4, 8])
    @pytest.mark.parametrize("tau", [0.1, 0.5, 0.9])
    def test_matches_monomial_oracle(self, N, tau):
        np.testing.assert_allclose(rescale_matrix_1d(N, tau), _oracle_1d(N, tau), atol=1e-12)

    def test_invalid_tau(self):
        for bad in (0.0, -0.1, 1.5, float("nan"), 1e-7):
            with pytest.raises(ValueError):
                rescale_matrix_1d(2, bad)


class TestOperator:
    def test_degree_one_diagonal(self):
        T = rescale_matrix(2, 1, 0.5).matrix
        np.testing.assert_allclose(T, np.diag([1.0, 0.5, 0.5]), atol=1e-15)

    @pytest.mark.parametrize("d", [1, 3, 6])
    def test_identity(self, d):
        np.testing.assert_array_equal(rescale_matrix(d, 3, 1.0).matrix,
                                      np.eye(len(total_degree_indices(d, 3))))

    @pytest.mark.parametrize("d,N", [(1, 4), (2, 3), (3, 2)])
    @pytest.mark.parametrize("tau", [0.2, 0.7])
    def test_matches_sparse_grid_quadrature(self, d, N, tau):
        idx = total_degree_indices(d, N)
        rule = smolyak(d, N + 2)
        P = basis_matrix(idx, rule.nodes)
        Pt = basis_matrix(idx, tau * rule.nodes)
        oracle = (P * rule.weights[:, None]).T @ Pt
        np.testing.assert_allclose(rescale_matrix(d, N, tau).matrix, oracle, atol=1e-8)

    @given(st.integers(1, 4), st.integers(1, 5), taus)
    def test_structure(self, d, N, tau):
        op = rescale_matrix(d, N, tau)
        T = op.matrix
        idx = index_array(op.indices)
        deg = idx.sum(axis=1)
        np.testing.assert_allclose(np.diag(T), tau**deg, rtol=0, atol=1e-12)
        # T[n, m] = 0 when |n| > |m| or when some n_i, m_i differ in parity
        lower = deg[:, None] > deg[None, :]
        parity = np.any((idx[:, None, :] - idx[None, :, :]) % 2 == 1, axis=2)
        assert np.all(np.abs(T[lower | parity]) <= 1e-12)

    @given(st.integers(1, 3), st.integers(1, 4), taus, taus)
    def test_semigroup(self, d, N, t1, t2):
        a = rescale_matrix(d, N, t2).matrix @ rescale_matrix(d, N, t1).matrix
        np.testing.assert_allclose(a, rescale_matrix(d, N, t1 * t2).matrix, atol=1e-12)

    def test_index_mismatch(self, rng):
        e = _random_expansion(rng, 2, 3)
        with pytest.raises(ValueError, match="does not match"):
            surrogate_coeffs(e, rescale_matrix(2, 2, 0.5))


class TestSurrogate:
    def test_tau_one_unchanged(self, rng):
        e = _random_expansion(rng, 3, 3)
        np.testing.assert_array_equal(rescale(e, 1.0).coeffs, e.coeffs)

    def test_degree_one(self, rng):
        e = _random_expansion(rng, 4, 1)
        s = rescale(e, 0.3)
        np.testing.assert_array_equal(s.coeffs[0], e.coeffs[0])
        np.testing.assert_allclose(s.coeffs[1:], 0.3 * e.coeffs[1:], rtol=1e-15)
        m0, v0 = gpc_moments(e)
        m, v = surrogate_moments(s)
        np.testing.assert_array_equal(m, m0)
        np.testing.assert_allclose(v, 0.09 * v0, rtol=1e-14)

    def test_pure_psi2(self):
        c = np.zeros((3, 1))
        c[2] = 1.7
        s = rescale(GpcExpansion(1, 2, c, [0.0]), 0.4)
        assert s.coeffs[0, 0] == pytest.approx(1.7 * (0.16 - 1) / sqrt(2), rel=1e-13)

    @given(st.integers(1, 3), st.integers(1, 4), taus, st.integers(0, 2**31 - 1))
    def test_surrogate_equals_scaled_evaluation(self, d, N, tau, seed):
        rng = np.random.default_rng(seed)
        e = _random_expansion(rng, d, N)
        X = rng.standard_normal((6, d))
        np.testing.assert_allclose(gpc_eval_many(rescale(e, tau), X), gpc_eval_many(e, tau * X),
                                   rtol=1e-10, atol=1e-10)

    @given(st.integers(1, 3), st.integers(2, 5), taus, st.integers(0, 2**31 - 1))
    def test_odd_part_leaves_mean(self, d, N, tau, seed):
        rng = np.random.default_rng(seed)
        e = _random_expansion(rng, d, N)
        odd = GpcExpansion(d, N, np.where((e.degrees() % 2 == 1)[:, None], e.coeffs, 0.0),
                           e.spatial_points)
        scale = np.abs(e.coeffs).sum(axis=0)
        assert np.all(np.abs(surrogate_moments(rescale(odd, tau))[0]) <= 1e-12 * scale)
        m1 = surrogate_moments(rescale(zero_even_coeffs(e), tau))[0]
        np.testing.assert_allclose(m1, e.coeffs[0], atol=1e-12 * scale.max())

    def test_sample_at_origin(self, rng):
        e = _random_expansion(rng, 2, 4)
        s = rescale(e, 0.5)
        np.testing.assert_array_equal(surrogate_sample(s, 0.5, np.zeros(2)), gpc_eval(s, np.zeros(2)))
        np.testing.assert_array_equal(surrogate_sample(e, 1.0, np.ones(2)), gpc_eval(e, np.ones(2)))

    def test_sample_variance_matches_moments(self, rng):
        e = _random_expansion(rng, 2, 3, P=1)
        s = rescale(e, 0.6)
        y = gpc_eval_many(s, rng.standard_normal((1_000_000, 2)))[:, 0]
        _, v = surrogate_moments(s)
        se = np.sqrt((np.mean((y - y.mean()) ** 4) - y.var() ** 2) / len(y))
        assert abs(y.var(ddof=1) - v[0]) < 3 * se

    def test_polynomial_model_exact(self):
        # a degree-N polynomial model has no truncated tail: surrogate == direct assembly
        def f(xi):
            return np.array([1 + xi[0] * xi[1] - 0.5 * xi[2] ** 3 + xi[0] ** 2,
                             2 - xi[1] + 0.1 * xi[2] ** 2 * xi[0]])
        model = FunctionModel(f, 3, [0.0, 1.0])
        off = GpcSurrogate(degree=3).fit_model(model).expansion_
        for tau in (0.2, 0.55, 0.9):
            direct = GpcSurrogate(degree=3).fit_model(model, tau=tau).expansion_
            np.testing.assert_allclose(rescale(off, tau).coeffs, direct.coeffs, atol=1e-12)

    def test_synthetic_mean_close_to_direct(self):
        # log-normal: agreement limited by the degree-N truncation, tiny for small coefficients
        m = SyntheticModel.random(9, 3, scale=0.02, seed=3)
        off = GpcSurrogate(degree=4).fit_model(m).expansion_
        for tau in (0.3, 0.6, 0.9):
            direct = GpcSurrogate(degree=4).fit_model(m, tau=tau).expansion_
            a, b = surrogate_moments(rescale(off, tau))[0], gpc_moments(direct)[0]
            assert np.max(np.abs(a - b) / np.abs(b)) <= 1e-10


class TestSweep:
    def test_tau_one(self, rng):
        e = _random_expansion(rng, 2, 3)
        res = tau_sweep(e, [1.0])
        m, v = gpc_moments(e)
        np.testing.assert_array_equal(res.means[0], m)
        np.testing.assert_array_equal(res.variances[0], v)

    def test_degree_one_variance_monotone(self, rng):
        e = _random_expansion(rng, 3, 1)
        res = tau_sweep(e, np.linspace(0.1, 1.0, 10))
        assert np.all(np.diff(res.variances, axis=0) >= 0)

    def test_error_decreases_toward_one(self):
        m = SyntheticModel.random(11, 3, scale=0.3, seed=0)
        off = GpcSurrogate(degree=3).fit_model(m).expansion_
        sweep = tau_sweep(off, [0.1, 0.3, 0.5, 0.7, 0.9])
        errs = []
        for k, tau in enumerate(sweep.taus):
            direct = gpc_moments(GpcSurrogate(degree=3).fit_model(m, tau=tau).expansion_)[0]
            errs.append(np.max(np.abs(sweep.means[k] - direct) / np.abs(direct)))
        assert all(a >= b for a, b in zip(errs, errs[1:]))

    def test_rejects_bad_tau_before_work(self, rng):
        e = _random_expansion(rng, 2, 2)
        with pytest.raises(ValueError, match="tau"):
            tau_sweep(e, [0.5, 0.0])

    def test_csv_header(self, rng, tmp_path):
        tau_sweep(_random_expansion(rng, 1, 1, P=2), [0.5]).to_csv(tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "tau,spatial_index,mean,variance" and len(lines) == 3
