"""Scikit-learn style estimators over the chaos / epistemic / DD machinery.

``GpcSurrogate`` fits a Hermite chaos expansion from quadrature data (or
straight from a model) and predicts QoI fields at standard-normal inputs.
``EpistemicSurrogate`` wraps a fitted offline surrogate and serves
moments and samples at a reduced standard deviation ``tau * sigma_max``.
``DomainDecompositionSurrogate`` runs the coarse-solution dimension
reduction and serves the same interface for the stitched global field.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ._validation import check_is_fitted, check_samples, check_tau, check_taus
from .assembly import default_level
from .ddreduce import DDResult, block_partition, run_dd
from .epistemic import SweepResult, rescale, tau_sweep
from .polychaos import GpcExpansion, basis_matrix, gpc_moments, project, total_degree_indices
from .sparsegrid import smolyak


class GpcSurrogate(RegressorMixin, BaseEstimator):
    """Total-degree Hermite chaos regressor.

    Parameters
    ----------
    degree : int
        Maximum total degree ``N``.
    level : int or None
        Sparse-grid level used by :meth:`fit_model`; ``None`` means ``N + 2``.
    """

    def __init__(self, degree=3, level=None):
        self.degree = degree
        self.level = level

    def fit(self, X, y, sample_weight=None, spatial_points=None):
        """Fit from samples ``X`` (n, d) and outputs ``y`` (n, n_points).

        With ``sample_weight`` the coefficients are the discrete projection
        ``sum_q w_q y_q psi(X_q)`` (quadrature nodes and weights); without
        it, an ordinary least-squares fit.
        """
        X = check_samples(X)
        y = np.asarray(y, dtype=float)
        self._single_output = y.ndim == 1
        y = y.reshape(X.shape[0], -1)
        if self.degree < 0:
            raise ValueError(f"degree must be >= 0, got {self.degree}")
        indices = total_degree_indices(X.shape[1], self.degree)
        if sample_weight is not None:
            coeffs = project(indices, X, np.asarray(sample_weight, dtype=float), y)
        else:
            psi = basis_matrix(indices, X)
            coeffs = np.linalg.lstsq(psi, y, rcond=None)[0]
        if spatial_points is None:
            spatial_points = np.arange(y.shape[1], dtype=float)
        self.expansion_ = GpcExpansion(X.shape[1], self.degree, coeffs, spatial_points, indices)
        self.n_features_in_ = X.shape[1]
        return self

    def fit_model(self, model, tau=1.0):
        """Evaluate ``model`` at the sparse-grid nodes (scaled by ``tau``) and fit."""
        tau = check_tau(tau)
        level = default_level(self.degree) if self.level is None else self.level
        rule = smolyak(model.dim, level)
        before = model.n_evals
        values = model.evaluate_many(tau * rule.nodes)
        self.n_model_evals_ = model.n_evals - before
        return self.fit(rule.nodes, values, sample_weight=rule.weights,
                        spatial_points=model.spatial_points)

    @classmethod
    def from_expansion(cls, expansion: GpcExpansion, level=None):
        est = cls(degree=expansion.max_degree, level=level)
        est.expansion_ = expansion
        est.n_features_in_ = expansion.dim
        est._single_output = False
        return est

    @property
    def coef_(self):
        check_is_fitted(self, "expansion_")
        return self.expansion_.coeffs

    def predict(self, X):
        check_is_fitted(self, "expansion_")
        X = check_samples(X, self.n_features_in_)
        out = basis_matrix(self.expansion_.indices, X) @ self.expansion_.coeffs
        return out[:, 0] if getattr(self, "_single_output", False) else out

    def evaluate_many(self, X):
        check_is_fitted(self, "expansion_")
        X = check_samples(X, self.n_features_in_)
        return basis_matrix(self.expansion_.indices, X) @ self.expansion_.coeffs

    def moments(self):
        check_is_fitted(self, "expansion_")
        return gpc_moments(self.expansion_)

    def rescale(self, tau) -> "EpistemicSurrogate":
        return EpistemicSurrogate(tau=tau).fit(self)


class EpistemicSurrogate(BaseEstimator):
    """Offline expansion re-expressed for standard deviation ``tau * sigma_max``.

    ``predict`` takes standard-normal inputs ``xi``; the underlying field
    is evaluated at ``zeta = tau * xi``.
    """

    def __init__(self, tau=1.0):
        self.tau = tau

    def fit(self, offline, y=None):
        if isinstance(offline, GpcSurrogate):
            check_is_fitted(offline, "expansion_")
            offline = offline.expansion_
        if not isinstance(offline, GpcExpansion):
            raise TypeError(f"expected a GpcExpansion or fitted GpcSurrogate, got {type(offline)}")
        tau = check_tau(self.tau)
        self.offline_ = offline
        self.expansion_ = rescale(offline, tau)
        self.n_features_in_ = offline.dim
        return self

    def predict(self, X):
        check_is_fitted(self, "expansion_")
        X = check_samples(X, self.n_features_in_)
        return basis_matrix(self.expansion_.indices, X) @ self.expansion_.coeffs

    evaluate_many = predict

    def moments(self):
        check_is_fitted(self, "expansion_")
        return gpc_moments(self.expansion_)

    def sweep(self, taus) -> SweepResult:
        check_is_fitted(self, "offline_")
        return tau_sweep(self.offline_, check_taus(taus))


class DomainDecompositionSurrogate(BaseEstimator):
    """Reduced-dimension local expansions stitched over a block partition.

    Parameters
    ----------
    layout : tuple
        Blocks per axis of the spatial points, e.g. ``(4, 2)``.
    reduced_dim : int
        Local stochastic dimension ``r``.
    degree : int
        Local polynomial degree ``N_s``.
    level, coarse_level : int
        Sparse-grid levels of the local and coarse (degree-1) solves.
    bounds : tuple or None
        ``(lower, upper)`` of the spatial domain for the partition.
    """

    def __init__(self, layout=(4, 2), reduced_dim=3, degree=3, level=None, coarse_level=2,
                 bounds=None):
        self.layout = layout
        self.reduced_dim = reduced_dim
        self.degree = degree
        self.level = level
        self.coarse_level = coarse_level
        self.bounds = bounds

    def fit(self, model, y=None, tau=1.0, coarse=None):
        """Coarse solve, reduction and local assembly against ``model``.

        ``tau < 1`` assembles the local expansions directly at the reduced
        standard deviation (reference runs); pass the ``coarse`` expansion of
        a previous fit to reuse its rotations.
        """
        part = block_partition(model.spatial_points, self.layout, self.bounds)
        before = model.n_evals
        self.result_ = run_dd(model, part, self.reduced_dim, self.degree, level=self.level,
                              coarse_level=self.coarse_level, tau=check_tau(tau), coarse=coarse)
        self.n_model_evals_ = model.n_evals - before
        self.partition_ = part
        self.n_features_in_ = model.dim
        self.tau_ = 1.0
        return self

    @classmethod
    def from_result(cls, result: DDResult, **params):
        est = cls(**params)
        est.result_ = result
        est.n_features_in_ = result.coarse.dim
        est.tau_ = 1.0
        return est

    def moments(self, tau=None):
        check_is_fitted(self, "result_")
        return self.result_.moments(self.tau_ if tau is None else check_tau(tau))

    def predict(self, X, tau=1.0):
        """Global field at standard-normal ``X``; local variables are ``A^T xi``."""
        check_is_fitted(self, "result_")
        tau = check_tau(tau)
        X = check_samples(X, self.n_features_in_)
        out = np.empty((X.shape[0], self.result_.n_points))
        for red in self.result_.reductions:
            e = red.expansion if tau == 1.0 else rescale(red.expansion, tau)
            out[:, red.point_index] = basis_matrix(e.indices, X @ red.rotation) @ e.coeffs
        return out

    def at_tau(self, tau) -> "_TauView":
        return _TauView(self, check_tau(tau))


class _TauView:
    """Evaluator of a DD surrogate at a fixed ``tau`` (for Monte Carlo helpers)."""

    def __init__(self, est, tau):
        self.est = est
        self.tau = tau

    def evaluate_many(self, X):
        return self.est.predict(X, tau=self.tau)
