"""Post-processing of a maximum-variance chaos expansion to smaller variances.

A field with standard deviation ``tau * sigma_max`` is the offline field
evaluated at ``zeta = tau * xi``.  Re-projecting the offline expansion
onto the rescaled basis ``psi_n(zeta / tau)`` is a linear map on the
coefficients:

    T[n, m] = E[psi_m(tau xi) psi_n(xi)] = prod_i t[n_i, m_i]

so moments and samples for any ``tau`` need no further model solves.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ._validation import check_tau, check_taus
from .polychaos import (GpcExpansion, gpc_eval, gpc_moments, hermite_table, index_array,
                        total_degree_indices)
from .sparsegrid import gauss_hermite_1d


def rescale_matrix_1d(N: int, tau: float) -> np.ndarray:
    """``t[n, m] = E[psi_m(tau x) psi_n(x)]`` for 0 <= n, m <= N.

    The integrand has degree at most 2N, so the (N+1)-point Gauss-Hermite
    rule is exact.
    """
    tau = check_tau(tau)
    if N < 0:
        raise ValueError(f"degree must be >= 0, got {N}")
    if tau == 1.0:
        return np.eye(N + 1)
    x, w = gauss_hermite_1d(N + 1)
    psi = hermite_table(N, x)  # psi[q, n]
    psi_tau = hermite_table(N, tau * x)  # psi_tau[q, m]
    return (psi * w[:, None]).T @ psi_tau


@dataclass(frozen=True)
class RescaleOperator:
    tau: float
    indices: list
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.indices[0].dim

    @property
    def max_degree(self) -> int:
        return max(ix.total_degree for ix in self.indices)

    def apply(self, coeffs) -> np.ndarray:
        return self.matrix @ np.asarray(coeffs, dtype=float)


def rescale_matrix(d: int, N: int, tau: float, indices=None) -> RescaleOperator:
    """Tensorized rescale operator over the total-degree index set."""
    tau = check_tau(tau)
    if indices is None:
        indices = total_degree_indices(d, N)
    t = rescale_matrix_1d(N, tau)
    idx = index_array(indices)
    T = np.ones((len(indices), len(indices)))
    for j in range(idx.shape[1]):
        col = idx[:, j]
        if col.any():
            T *= t[col[:, None], col[None, :]]
    return RescaleOperator(tau=tau, indices=list(indices), matrix=T)


def surrogate_coeffs(e: GpcExpansion, op: RescaleOperator) -> GpcExpansion:
    """Coefficients of the surrogate in the rescaled basis ``psi_n(zeta / tau)``."""
    if list(op.indices) != list(e.indices):
        raise ValueError(
            f"operator built for (d={op.dim}, N={op.max_degree}) does not match "
            f"expansion (d={e.dim}, N={e.max_degree})"
        )
    return GpcExpansion(
        dim=e.dim,
        max_degree=e.max_degree,
        indices=list(e.indices),
        coeffs=op.apply(e.coeffs),
        spatial_points=e.spatial_points,
    )


def rescale(e: GpcExpansion, tau: float) -> GpcExpansion:
    return surrogate_coeffs(e, rescale_matrix(e.dim, e.max_degree, tau, e.indices))


def surrogate_moments(e: GpcExpansion) -> tuple[np.ndarray, np.ndarray]:
    # same orthonormality identity as the offline moments, under w_tau
    return gpc_moments(e)


def surrogate_sample(e: GpcExpansion, tau: float, xi) -> np.ndarray:
    """Evaluate a rescaled expansion at standard-normal ``xi`` (``zeta = tau xi``)."""
    check_tau(tau)
    return gpc_eval(e, xi)


@dataclass
class SweepResult:
    taus: list
    means: np.ndarray  # (n_tau, n_points)
    variances: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau", "spatial_index", "mean", "variance"])
            for k, tau in enumerate(self.taus):
                for i, (m, v) in enumerate(zip(self.means[k], self.variances[k])):
                    writer.writerow([repr(float(tau)), i, repr(float(m)), repr(float(v))])


def tau_sweep(e: GpcExpansion, taus) -> SweepResult:
    """Surrogate mean and variance fields for each ``tau``; no model solves."""
    taus = check_taus(taus)
    means, variances = [], []
    for tau in taus:
        m, v = surrogate_moments(rescale(e, tau))
        means.append(m)
        variances.append(v)
    shape = (len(taus), e.n_points)
    return SweepResult(taus=taus, means=np.array(means).reshape(shape),
                       variances=np.array(variances).reshape(shape))


def zero_even_coeffs(e: GpcExpansion) -> GpcExpansion:
    """Copy of ``e`` with every coefficient of even total degree >= 2 removed."""
    deg = e.degrees()
    coeffs = e.coeffs.copy()
    coeffs[(deg >= 2) & (deg % 2 == 0)] = 0.0
    return GpcExpansion(e.dim, e.max_degree, coeffs, e.spatial_points, list(e.indices))

