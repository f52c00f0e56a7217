import numpy as np
import pytest
from sklearn.base import clone

from epigpc._validation import NotFittedError
from epigpc.ddreduce import block_partition
from epigpc.estimators import DomainDecompositionSurrogate, EpistemicSurrogate, GpcSurrogate
from epigpc.mcref import mc_moments
from epigpc.models import FunctionModel, SyntheticModel
from epigpc.polychaos import gpc_moments
from epigpc.sparsegrid import smolyak


def test_params_and_clone():
    est = GpcSurrogate(degree=4, level=7)
    assert est.get_params() == {"degree": 4, "level": 7}
    c = clone(est)
    assert c.get_params() == est.get_params() and not hasattr(c, "expansion_")
    dd = DomainDecompositionSurrogate(layout=(2,), reduced_dim=2)
    assert clone(dd).get_params()["layout"] == (2,)


def test_not_fitted():
    with pytest.raises(NotFittedError):
        GpcSurrogate().predict(np.zeros((1, 2)))
    with pytest.raises(NotFittedError):
        EpistemicSurrogate().moments()


def test_fit_quadrature_and_lstsq_agree_on_polynomial(rng):
    def f(X):
        return np.stack([1 + X[:, 0] * X[:, 1], X[:, 1] ** 2], axis=1)
    rule = smolyak(2, 4)
    a = GpcSurrogate(degree=2).fit(rule.nodes, f(rule.nodes), sample_weight=rule.weights)
    X = rng.standard_normal((200, 2))
    b = GpcSurrogate(degree=2).fit(X, f(X))
    np.testing.assert_allclose(a.coef_, b.coef_, atol=1e-10)
    Xt = rng.standard_normal((10, 2))
    np.testing.assert_allclose(a.predict(Xt), f(Xt), atol=1e-12)


def test_single_output_and_score(rng):
    X = rng.standard_normal((100, 1))
    y = 2 + 3 * X[:, 0]
    est = GpcSurrogate(degree=1).fit(X, y)
    assert est.predict(X).shape == (100,)
    assert est.score(X, y) == pytest.approx(1.0)


def test_fit_model_counts_and_moments():
    m = SyntheticModel.random(5, 3, scale=0.1, seed=0)
    est = GpcSurrogate(degree=3).fit_model(m)
    assert est.n_model_evals_ == smolyak(3, 5).count
    mean, _ = est.moments()
    np.testing.assert_allclose(mean, m.exact_mean(), rtol=1e-8)


def test_dimension_check():
    est = GpcSurrogate(degree=1).fit(np.zeros((3, 2)) + np.arange(3)[:, None], np.arange(3.0))
    with pytest.raises(ValueError):
        est.predict(np.zeros((2, 3)))


def test_epistemic_surrogate():
    m = SyntheticModel.random(5, 2, scale=0.05, seed=0)
    off = GpcSurrogate(degree=4).fit_model(m)
    sur = off.rescale(0.5)
    mean, var = sur.moments()
    np.testing.assert_allclose(mean, m.exact_mean(0.5), rtol=1e-9)
    np.testing.assert_allclose(var, m.exact_variance(0.5), rtol=1e-5)
    X = np.random.default_rng(0).standard_normal((4, 2))
    np.testing.assert_allclose(sur.predict(X), off.predict(0.5 * X), rtol=1e-10)
    sweep = sur.sweep([0.5, 1.0])
    np.testing.assert_array_equal(sweep.means[1], off.moments()[0])
    with pytest.raises(ValueError):
        EpistemicSurrogate(tau=2.0).fit(off)


def test_dd_surrogate_predict_consistent():
    rng = np.random.default_rng(1)
    C = rng.standard_normal((20, 3))
    model = FunctionModel(lambda xi: 1 + C @ xi + 0.1 * (C @ xi) ** 2, 3, np.linspace(0, 1, 20))
    est = DomainDecompositionSurrogate(layout=(2,), reduced_dim=3, degree=2).fit(model)
    assert est.n_model_evals_ == est.result_.total_evals
    X = rng.standard_normal((5, 3))
    np.testing.assert_allclose(est.predict(X), np.array([model.func(x) for x in X]), atol=1e-10)
    mean, var = est.moments(0.5)
    mc = mc_moments(est.at_tau(0.5), 3, 20_000, seed=0)
    assert np.all(np.abs(mc.mean - mean) < 4 * mc.std_error + 1e-12)
