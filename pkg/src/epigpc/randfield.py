"""Squared-exponential Gaussian fields and their discrete Karhunen-Loeve basis."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import eigh

from ._validation import check_tau, check_vector

#: eigenvalues below this fraction of the largest are treated as zero
RELATIVE_EIG_FLOOR = 1e-14


@dataclass
class CovarianceSpec:
    """``C(x, y) = sigma^2 exp(-|L (x - y)|^2)`` sampled at ``points``.

    ``weights`` default to ``1 / n_points`` each (equal-weight Nystrom).
    """

    sigma: float
    L: np.ndarray
    points: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        n, dim = self.points.shape
        L = np.asarray(self.L, dtype=float)
        self.L = np.diag(L) if L.ndim == 1 else L.reshape(dim, dim)
        if self.weights is None:
            self.weights = np.full(n, 1.0 / n)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (n,) or np.any(self.weights <= 0):
            raise ValueError("weights must be positive, one per point")
        if not np.allclose(self.weights, self.weights[0], rtol=1e-14, atol=0):
            raise ValueError("weights must be equal")

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def matrix(self) -> np.ndarray:
        y = self.points @ self.L.T
        sq = np.sum(y**2, axis=1)
        d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * y @ y.T, 0.0)
        np.fill_diagonal(d2, 0.0)
        return self.sigma**2 * np.exp(-d2)


def kernel_eval(spec: CovarianceSpec, x, y) -> float:
    diff = spec.L @ (np.atleast_1d(np.asarray(x, float)) - np.atleast_1d(np.asarray(y, float)))
    return float(spec.sigma**2 * np.exp(-diff @ diff))


@dataclass(frozen=True)
class KlBasis:
    """Truncated Karhunen-Loeve basis ``a0 + sum sqrt(lam_i) a_i xi_i``.

    ``eigenvectors`` has shape (trunc_dim, n_points) and is orthonormal
    under the equal quadrature weight ``weight``.
    """

    points: np.ndarray
    mean: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    weight: float = 1.0
    total_variance: float = float("nan")

    @property
    def trunc_dim(self) -> int:
        return len(self.eigenvalues)

    @property
    def modes(self) -> np.ndarray:
        """``sqrt(lam_i) a_i`` as rows, shape (trunc_dim, n_points)."""
        return np.sqrt(self.eigenvalues)[:, None] * self.eigenvectors

    def energy_ratio(self) -> float:
        """Fraction of the discrete trace captured by the retained modes."""
        return float(np.sum(self.eigenvalues) / self.total_variance)

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "mean": self.mean.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenvectors": self.eigenvectors.tolist(),
            "weight": self.weight,
            "total_variance": self.total_variance,
        }

    @classmethod
    def from_dict(cls, doc) -> "KlBasis":
        return cls(
            points=np.asarray(doc["points"], float),
            mean=np.asarray(doc["mean"], float),
            eigenvalues=np.asarray(doc["eigenvalues"], float),
            eigenvectors=np.asarray(doc["eigenvectors"], float).reshape(len(doc["eigenvalues"]), -1),
            weight=float(doc.get("weight", 1.0)),
            total_variance=float(doc.get("total_variance", float("nan"))),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "KlBasis":
        return cls.from_dict(json.loads(Path(path).read_text()))


def discrete_kl(spec: CovarianceSpec, d: int, mean=0.0) -> KlBasis:
    """Solve the equal-weight Nystrom eigenproblem and keep the ``d`` largest modes."""
    n = spec.n_points
    if not 1 <= d <= n:
        raise ValueError(f"truncation d={d} must lie in [1, {n}]")
    w = float(spec.weights[0])
    K = w * spec.matrix()
    lam, vec = eigh(K, subset_by_index=[n - d, n - 1])
    lam, vec = lam[::-1], vec[:, ::-1]
    floor = RELATIVE_EIG_FLOOR * lam[0]
    if np.any(lam <= floor):
        full = np.linalg.eigvalsh(K)
        admissible = int(np.sum(full > floor))
        raise ValueError(
            f"truncation d={d} exceeds the numerically positive spectrum; "
            f"largest admissible d is {admissible}"
        )
    vec = vec / np.sqrt(w)
    # deterministic sign: largest-magnitude entry positive
    pivot = np.argmax(np.abs(vec), axis=0)
    vec = vec * np.sign(vec[pivot, np.arange(d)])
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (n,)).copy()
    return KlBasis(
        points=spec.points.copy(),
        mean=mean,
        eigenvalues=lam.copy(),
        eigenvectors=vec.T.copy(),
        weight=w,
        total_variance=float(np.trace(K)),
    )


def sample_field(kl: KlBasis, xi) -> np.ndarray:
    xi = check_vector(xi, kl.trunc_dim, "xi")
    return kl.mean + xi @ kl.modes


def scale_variance(kl: KlBasis, tau: float) -> KlBasis:
    """Basis of the field with standard deviation scaled by ``tau``."""
    tau = check_tau(tau)
    return replace(kl, eigenvalues=kl.eigenvalues * tau**2,
                   total_variance=kl.total_variance * tau**2)


def write_eigenvalue_csv(path, eigenvalues, label: str = "lambda") -> None:
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", label, "ratio_to_first"])
        for i, lam in enumerate(eigenvalues, start=1):
            writer.writerow([i, repr(float(lam)), repr(float(lam / eigenvalues[0]))])
