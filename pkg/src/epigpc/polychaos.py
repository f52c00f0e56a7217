"""Total-degree multi-index sets and orthonormal Hermite chaos expansions.

The basis is the tensor product of probabilists' Hermite polynomials
normalized so that ``E[psi_n psi_m] = delta_nm`` under the standard
Gaussian measure.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import comb
from pathlib import Path

import numpy as np

from ._validation import check_vector


@dataclass(frozen=True, order=False)
class MultiIndex:
    entries: tuple[int, ...]

    def __post_init__(self):
        entries = tuple(int(n) for n in self.entries)
        if any(n < 0 for n in entries):
            raise ValueError(f"multi-index entries must be >= 0, got {entries}")
        object.__setattr__(self, "entries", entries)

    @property
    def total_degree(self) -> int:
        return sum(self.entries)

    @property
    def dim(self) -> int:
        return len(self.entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]


def _compositions(total: int, d: int):
    # all non-negative d-tuples summing to `total`, first coordinate largest first
    if d == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, d - 1):
            yield (first,) + rest


def total_degree_indices(d: int, N: int) -> list[MultiIndex]:
    """All multi-indices with ``|n| <= N``, graded then lexicographic.

    Within a degree the order is reverse-lexicographic on the entries, so
    for d=2, N=1 the result is (0,0), (1,0), (0,1).  The count is
    ``binomial(d + N, N)``.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if N < 0:
        raise ValueError(f"degree must be >= 0, got {N}")
    out = [MultiIndex(c) for k in range(N + 1) for c in _compositions(k, d)]
    assert len(out) == comb(d + N, N)
    return out


def index_array(indices) -> np.ndarray:
    """Stack multi-indices into an integer array of shape (n_terms, d)."""
    return np.array([tuple(ix) for ix in indices], dtype=np.int64).reshape(len(indices), -1)


def hermite_table(N: int, x) -> np.ndarray:
    """Values ``psi_k(x)`` for k = 0..N, stacked along a new last axis."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (N + 1,))
    out[..., 0] = 1.0
    if N >= 1:
        out[..., 1] = x
    for n in range(1, N):
        out[..., n + 1] = (x * out[..., n] - np.sqrt(n) * out[..., n - 1]) / np.sqrt(n + 1)
    return out


def hermite_eval(n: int, x):
    """Normalized probabilists' Hermite polynomial of degree ``n``."""
    if n < 0:
        raise ValueError(f"degree must be >= 0, got {n}")
    val = hermite_table(n, x)[..., n]
    return float(val) if np.ndim(val) == 0 else val


def tensor_poly_eval(n, xi) -> float:
    n = tuple(n)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (len(n),):
        raise ValueError(f"multi-index has {len(n)} entries but xi has shape {xi.shape}")
    return float(np.prod([hermite_eval(k, x) for k, x in zip(n, xi)]))


def basis_matrix(indices, xi) -> np.ndarray:
    """Evaluate every basis polynomial at every row of ``xi``.

    Returns an array of shape (n_samples, n_terms).
    """
    idx = index_array(indices)
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if xi.shape[1] != idx.shape[1]:
        raise ValueError(f"expected {idx.shape[1]} columns in xi, got {xi.shape[1]}")
    N = int(idx.max()) if idx.size else 0
    table = hermite_table(N, xi)  # (n, d, N+1)
    out = np.ones((xi.shape[0], idx.shape[0]))
    for t, row in enumerate(idx):
        for j in np.flatnonzero(row):
            out[:, t] *= table[:, j, row[j]]
    return out


@dataclass
class GpcExpansion:
    """Hermite chaos expansion with one coefficient vector per basis term.

    ``coeffs`` has shape (n_terms, n_points); row ``t`` holds ``u_n(x)`` for
    ``indices[t]`` over ``spatial_points``.
    """

    dim: int
    max_degree: int
    coeffs: np.ndarray
    spatial_points: np.ndarray
    indices: list[MultiIndex] = field(default=None)

    def __post_init__(self):
        if self.indices is None:
            self.indices = total_degree_indices(self.dim, self.max_degree)
        self.indices = [ix if isinstance(ix, MultiIndex) else MultiIndex(ix) for ix in self.indices]
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        self.spatial_points = np.asarray(self.spatial_points, dtype=float)
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("duplicate multi-indices")
        if self.coeffs.shape[0] != len(self.indices):
            raise ValueError(
                f"{self.coeffs.shape[0]} coefficient rows for {len(self.indices)} indices"
            )
        if self.coeffs.shape[1] != len(self.spatial_points):
            raise ValueError(
                f"coefficient length {self.coeffs.shape[1]} != "
                f"{len(self.spatial_points)} spatial points"
            )
        for ix in self.indices:
            if ix.dim != self.dim or ix.total_degree > self.max_degree:
                raise ValueError(f"index {ix.entries} outside (d={self.dim}, N={self.max_degree})")

    @property
    def n_terms(self) -> int:
        return len(self.indices)

    @property
    def n_points(self) -> int:
        return self.coeffs.shape[1]

    def degrees(self) -> np.ndarray:
        return np.array([ix.total_degree for ix in self.indices])

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "max_degree": self.max_degree,
            "indices": [list(ix.entries) for ix in self.indices],
            "spatial_points": self.spatial_points.tolist(),
            "coeffs": self.coeffs.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GpcExpansion":
        return cls(
            dim=int(doc["dim"]),
            max_degree=int(doc["max_degree"]),
            indices=[MultiIndex(ix) for ix in doc["indices"]],
            spatial_points=np.asarray(doc["spatial_points"], dtype=float),
            coeffs=np.asarray(doc["coeffs"], dtype=float).reshape(len(doc["indices"]), -1),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "GpcExpansion":
        return cls.from_dict(json.loads(Path(path).read_text()))


def gpc_eval(e: GpcExpansion, xi) -> np.ndarray:
    """Evaluate the expansion at a single realization ``xi`` of length ``e.dim``."""
    xi = check_vector(xi, e.dim, "xi")
    return basis_matrix(e.indices, xi[None, :])[0] @ e.coeffs


def gpc_eval_many(e: GpcExpansion, xi) -> np.ndarray:
    """Evaluate at each row of ``xi``; returns (n_samples, n_points)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    return basis_matrix(e.indices, xi) @ e.coeffs


def gpc_moments(e: GpcExpansion) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean and variance of the expansion under the Gaussian measure."""
    deg = e.degrees()
    zero = np.flatnonzero(deg == 0)
    mean = e.coeffs[zero[0]].copy() if zero.size else np.zeros(e.n_points)
    variance = np.sum(e.coeffs[deg >= 1] ** 2, axis=0)
    return mean, variance


def project(indices, nodes, weights, values) -> np.ndarray:
    """Discrete projection ``sum_q w_q f(node_q) psi_n(node_q)``.

    ``values`` has shape (n_nodes, n_points); returns (n_terms, n_points).
    """
    psi = basis_matrix(indices, nodes)
    return (psi * np.asarray(weights)[:, None]).T @ np.asarray(values, dtype=float)
