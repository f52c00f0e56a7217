"""Stochastic models mapping a standard-normal vector to a spatial QoI field.

Every model exposes ``spatial_points``, ``dim``, an evaluation counter
``n_evals`` and ``evaluate(xi)``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from math import log, sqrt

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ._validation import check_samples, check_vector
from .randfield import CovarianceSpec, KlBasis, discrete_kl, sample_field

#: mean and maximum standard deviation of the log-normal conductivity
CONDUCTIVITY_MEAN = 5.0
CONDUCTIVITY_STD = 2.5
LOG_MEAN = log(CONDUCTIVITY_MEAN / sqrt(1.0 + (CONDUCTIVITY_STD / CONDUCTIVITY_MEAN) ** 2))
SIGMA_MAX = sqrt(log(1.0 + (CONDUCTIVITY_STD / CONDUCTIVITY_MEAN) ** 2))


class ModelError(RuntimeError):
    """A model evaluation failed (non-finite input, singular system, ...)."""


class Model:
    """Base class: subclasses implement ``_evaluate``."""

    dim: int
    spatial_points: np.ndarray

    def __init__(self):
        self.n_evals = 0

    def evaluate(self, xi) -> np.ndarray:
        xi = check_vector(xi, self.dim, "xi")
        self.n_evals += 1
        return self._evaluate(xi)

    __call__ = evaluate

    def evaluate_many(self, X) -> np.ndarray:
        X = check_samples(X, self.dim)
        out = np.empty((X.shape[0], len(self.spatial_points)))
        for q, xi in enumerate(X):
            try:
                out[q] = self.evaluate(xi)
            except Exception as exc:
                raise ModelError(f"model evaluation failed at node {q}: {exc}") from exc
        return out

    def reset_counter(self) -> None:
        self.n_evals = 0

    def config(self) -> dict:
        return {"type": type(self).__name__}

    def config_hash(self) -> str:
        blob = json.dumps(self.config(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def _evaluate(self, xi):
        raise NotImplementedError


class FunctionModel(Model):
    """Wrap a plain callable ``f(xi) -> field``."""

    def __init__(self, func, dim: int, spatial_points):
        super().__init__()
        self.func = func
        self.dim = int(dim)
        self.spatial_points = np.asarray(spatial_points, dtype=float)

    def _evaluate(self, xi):
        return np.asarray(self.func(xi), dtype=float).reshape(len(self.spatial_points))


class SyntheticModel(Model):
    """``u(x, xi) = exp(c0(x) + sum_j c_j(x) xi_j)`` with closed-form moments."""

    def __init__(self, c0, C, spatial_points=None):
        super().__init__()
        self.c0 = np.asarray(c0, dtype=float).reshape(-1)
        self.C = np.asarray(C, dtype=float).reshape(len(self.c0), -1)
        if not (np.all(np.isfinite(self.c0)) and np.all(np.isfinite(self.C))):
            raise ValueError("synthetic coefficients must be finite")
        self.dim = self.C.shape[1]
        if spatial_points is None:
            spatial_points = np.linspace(0.0, 1.0, len(self.c0))
        self.spatial_points = np.asarray(spatial_points, dtype=float)

    @classmethod
    def random(cls, n_points: int, dim: int, scale: float = 0.1, seed: int = 0):
        """Smooth random coefficient fields on [0, 1]."""
        rng = np.random.default_rng(seed)
        x = np.linspace(0.0, 1.0, n_points)
        c0 = 0.5 + 0.3 * np.sin(2 * np.pi * x) + 0.1 * rng.standard_normal()
        C = np.stack(
            [scale / (j + 1) * np.cos((j + 1) * np.pi * x + rng.uniform(0, np.pi))
             for j in range(dim)],
            axis=1,
        )
        return cls(c0, C, x)

    def _evaluate(self, xi):
        return np.exp(self.c0 + self.C @ xi)

    def evaluate_many(self, X) -> np.ndarray:
        X = check_samples(X, self.dim)
        self.n_evals += X.shape[0]
        return np.exp(self.c0[None, :] + X @ self.C.T)

    def exact_mean(self, tau: float = 1.0) -> np.ndarray:
        s2 = tau**2 * np.sum(self.C**2, axis=1)
        return np.exp(self.c0 + 0.5 * s2)

    def exact_variance(self, tau: float = 1.0) -> np.ndarray:
        s2 = tau**2 * np.sum(self.C**2, axis=1)
        return np.exp(2 * self.c0 + s2) * np.expm1(s2)

    def config(self):
        return {"type": "synthetic", "c0": self.c0.tolist(), "C": self.C.tolist()}


def synthetic_eval(m: SyntheticModel, xi) -> np.ndarray:
    return m._evaluate(check_vector(xi, m.dim, "xi"))


@dataclass(eq=False)
class DiffusionModel(Model):
    """``-div(exp(a) grad u) = f`` on a rectangle with a log-normal ``a``.

    Vertex-centred finite volumes on an ``nx`` x ``ny`` cell grid; unknowns
    live at the grid nodes.  Dirichlet values on ``x1 = 0`` and ``x1 = X1``,
    zero flux on the horizontal sides (equivalent to ghost-node reflection),
    and a sink of strength ``sink`` per unit area on a rectangle centred in
    the domain (one cell by default).
    """

    nx: int = 120
    ny: int = 30
    extent: tuple = (240.0, 60.0)
    d: int = 10
    sigma_max: float = SIGMA_MAX
    L: tuple = (1 / 24, 1 / 20)
    log_mean: float = LOG_MEAN
    left: float = 50.0
    right: float = 25.0
    sink: float = -1.0
    sink_extent: tuple | None = None
    kl: KlBasis | None = field(default=None, repr=False)

    def __post_init__(self):
        Model.__init__(self)
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid must be at least 3x3 cells, got {self.nx}x{self.ny}")
        self.extent = tuple(float(v) for v in self.extent)
        self.h = (self.extent[0] / self.nx, self.extent[1] / self.ny)
        x = np.linspace(0.0, self.extent[0], self.nx + 1)
        y = np.linspace(0.0, self.extent[1], self.ny + 1)
        X, Y = np.meshgrid(x, y, indexing="ij")
        self.spatial_points = np.stack([X.ravel(), Y.ravel()], axis=1)
        self.dim = self.d
        self._setup_stencil()

    def config(self):
        return {
            "type": "diffusion", "nx": self.nx, "ny": self.ny, "extent": list(self.extent),
            "d": self.d, "sigma_max": self.sigma_max, "L": list(self.L),
            "log_mean": self.log_mean, "left": self.left, "right": self.right,
            "sink": self.sink, "sink_extent": None if self.sink_extent is None
            else list(self.sink_extent),
        }

    @property
    def shape(self):
        return (self.nx + 1, self.ny + 1)

    def covariance(self) -> CovarianceSpec:
        return CovarianceSpec(sigma=self.sigma_max, L=np.asarray(self.L),
                              points=self.spatial_points)

    def build_kl(self) -> KlBasis:
        if self.kl is None:
            self.kl = discrete_kl(self.covariance(), self.d, mean=self.log_mean)
        return self.kl

    def center_index(self) -> int:
        c = np.array(self.extent) / 2
        return int(np.argmin(np.sum((self.spatial_points - c) ** 2, axis=1)))

    def _node(self, i, j):
        return i * (self.ny + 1) + j

    def _setup_stencil(self):
        nx, ny = self.nx, self.ny
        h1, h2 = self.h
        I, J = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="ij")
        # x-direction faces between (i, j) and (i+1, j)
        ex_a = self._node(I[:-1, :], J[:-1, :]).ravel()
        ex_b = self._node(I[1:, :], J[1:, :]).ravel()
        len_x = np.where((J[:-1, :] == 0) | (J[:-1, :] == ny), h2 / 2, h2).ravel()
        # y-direction faces between (i, j) and (i, j+1)
        ey_a = self._node(I[:, :-1], J[:, :-1]).ravel()
        ey_b = self._node(I[:, 1:], J[:, 1:]).ravel()
        len_y = np.where((I[:, :-1] == 0) | (I[:, :-1] == nx), h1 / 2, h1).ravel()
        self._edge_a = np.concatenate([ex_a, ey_a])
        self._edge_b = np.concatenate([ex_b, ey_b])
        self._geom = np.concatenate([len_x / h1, len_y / h2])

        n = (nx + 1) * (ny + 1)
        i_of = np.repeat(np.arange(nx + 1), ny + 1)
        self._dirichlet = np.zeros(n)
        is_dir = (i_of == 0) | (i_of == nx)
        self._dirichlet[i_of == 0] = self.left
        self._dirichlet[i_of == nx] = self.right
        self._free = np.flatnonzero(~is_dir)
        self._is_dir = is_dir
        self._rhs = self.sink * self._sink_overlap()

    def _sink_overlap(self) -> np.ndarray:
        """Area of each node's control volume covered by the sink rectangle."""
        h1, h2 = self.h
        w, hgt = self.sink_extent if self.sink_extent is not None else (h1, h2)
        cx, cy = self.extent[0] / 2, self.extent[1] / 2
        px, py = self.spatial_points[:, 0], self.spatial_points[:, 1]

        def overlap(p, h, c, half, upper):
            lo = np.maximum(np.maximum(p - h / 2, 0.0), c - half)
            hi = np.minimum(np.minimum(p + h / 2, upper), c + half)
            return np.maximum(hi - lo, 0.0)

        return overlap(px, h1, cx, w / 2, self.extent[0]) * overlap(py, h2, cy, hgt / 2,
                                                                      self.extent[1])

    def stiffness(self, conductivity) -> sp.csr_matrix:
        """Full node-by-node matrix ``sum_faces G (u_P - u_N)``."""
        k = np.asarray(conductivity, dtype=float)
        ka, kb = k[self._edge_a], k[self._edge_b]
        G = self._geom * 2.0 * ka * kb / (ka + kb)
        n = len(k)
        a, b = self._edge_a, self._edge_b
        rows = np.concatenate([a, b, a, b])
        cols = np.concatenate([b, a, a, b])
        vals = np.concatenate([-G, -G, G, G])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def solve_conductivity(self, conductivity, with_sink: bool = True) -> np.ndarray:
        k = np.asarray(conductivity, dtype=float)
        if not np.all(np.isfinite(k)) or np.any(k <= 0):
            raise ModelError("conductivity must be finite and positive")
        A = self.stiffness(k)
        free = self._free
        A_ff = A[free][:, free].tocsc()
        rhs = (self._rhs[free] if with_sink else np.zeros(len(free)))
        rhs = rhs - A[free][:, self._is_dir] @ self._dirichlet[self._is_dir]
        try:
            u_free = splu(A_ff).solve(rhs)
        except RuntimeError as exc:
            raise ModelError(f"linear solve failed: {exc}") from exc
        u = self._dirichlet.copy()
        u[free] = u_free
        if not np.all(np.isfinite(u)):
            raise ModelError("non-finite solution")
        return u

    def _evaluate(self, xi):
        return diffusion_solve(self, self.build_kl(), xi)


def diffusion_solve(m: DiffusionModel, kl: KlBasis, xi) -> np.ndarray:
    """Solve the diffusion problem for the log-conductivity ``kl`` at ``xi``."""
    if kl.points.shape != m.spatial_points.shape:
        raise ValueError("KL basis is not discretized on the model's grid nodes")
    a = sample_field(kl, xi)
    with np.errstate(over="ignore", invalid="ignore"):
        k = np.exp(a)
    if np.any(np.isnan(k)) or np.any(~np.isfinite(k)):
        raise ModelError("exp(a) is not finite")
    return m.solve_conductivity(k)


def _round_key(xi) -> bytes:
    x = np.asarray(xi, dtype=float)
    out = np.zeros_like(x)
    nz = x != 0
    mag = np.floor(np.log10(np.abs(x[nz])))
    scale = 10.0 ** (11 - mag)
    out[nz] = np.round(x[nz] * scale) / scale
    return out.tobytes()


class CachedModel(Model):
    """Memoize evaluations of ``inner`` by input rounded to 12 significant digits.

    ``n_evals`` counts requests; ``inner.n_evals`` counts actual solves.
    With ``path`` the store persists across runs as an ``.npz`` file.
    """

    def __init__(self, inner: Model, path=None):
        super().__init__()
        self.inner = inner
        self.dim = inner.dim
        self.spatial_points = inner.spatial_points
        self.path = None if path is None else str(path)
        self.hits = 0
        self._store = {}
        if self.path is not None:
            try:
                data = np.load(self.path)
            except FileNotFoundError:
                data = None
            if data is not None:
                for x, v in zip(data["inputs"], data["values"]):
                    self._store[_round_key(x)] = (x, v)

    def config(self):
        return self.inner.config()

    def _evaluate(self, xi):
        key = _round_key(xi)
        hit = self._store.get(key)
        if hit is not None:
            self.hits += 1
            return hit[1].copy()
        val = self.inner.evaluate(xi)
        self._store[key] = (np.asarray(xi, dtype=float).copy(), val.copy())
        return val

    def save(self) -> None:
        if self.path is None or not self._store:
            return
        items = list(self._store.values())
        np.savez(self.path, inputs=np.array([x for x, _ in items]),
                 values=np.array([v for _, v in items]))


def kl_hash(kl: KlBasis | None) -> str:
    if kl is None:
        return "none"
    h = hashlib.sha256()
    for arr in (kl.mean, kl.eigenvalues, kl.eigenvectors):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]
