"""Stochastic dimension reduction by spatial domain decomposition.

A cheap degree-1 expansion ``u1`` in the full dimension gives, on each
subdomain, the covariance ``sum_j u_{e_j}(x) u_{e_j}(y)``.  Its leading
eigen-directions define a rotation ``A^s`` (d x r) and local variables
``eta = A^T xi``; a low-dimensional expansion in ``eta`` is then built on
each subdomain separately.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import check_tau
from .assembly import assemble_gpc, default_level
from .epistemic import rescale, surrogate_moments
from .polychaos import GpcExpansion, gpc_moments

logger = logging.getLogger(__name__)

#: singular values below this fraction of the largest count as zero
RANK_TOL = 1e-12


@dataclass(frozen=True)
class Partition:
    subdomains: tuple  # tuple of integer index arrays
    layout: tuple = ()
    n_points: int = 0

    def __post_init__(self):
        subs = tuple(np.asarray(s, dtype=np.int64) for s in self.subdomains)
        object.__setattr__(self, "subdomains", subs)
        n = self.n_points or (int(max(s.max() for s in subs)) + 1 if subs else 0)
        object.__setattr__(self, "n_points", n)
        check_coverage(subs, n)

    def __len__(self):
        return len(self.subdomains)

    def __getitem__(self, s):
        return self.subdomains[s]


def check_coverage(subdomains, n_points: int) -> None:
    """Raise unless ``subdomains`` partition ``range(n_points)`` with no empty block."""
    counts = np.zeros(n_points, dtype=np.int64)
    for s, idx in enumerate(subdomains):
        if len(idx) == 0:
            raise ValueError(f"subdomain {s} is empty")
        if idx.min() < 0 or idx.max() >= n_points:
            raise ValueError(f"subdomain {s} references points outside [0, {n_points})")
        np.add.at(counts, idx, 1)
    gaps = np.flatnonzero(counts == 0)
    overlaps = np.flatnonzero(counts > 1)
    if gaps.size or overlaps.size:
        raise ValueError(
            f"subdomains do not partition the points: uncovered {gaps[:20].tolist()}, "
            f"overlapping {overlaps[:20].tolist()}"
        )


def block_partition(points, layout=(4, 2), bounds=None) -> Partition:
    """Uniform ``p x q`` blocks (or ``p`` intervals for 1-D points).

    ``bounds`` is ``(lower, upper)`` per axis and defaults to the bounding
    box of ``points``.  Points on an interior block boundary go to the
    lower-index block.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    layout = tuple(int(v) for v in np.atleast_1d(layout))
    if len(layout) != points.shape[1]:
        raise ValueError(f"layout {layout} does not match {points.shape[1]}-D points")
    if bounds is None:
        lo, hi = points.min(axis=0), points.max(axis=0)
    else:
        lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (points.shape[1],)) for b in bounds)
    block = []
    for ax, p in enumerate(layout):
        rel = (points[:, ax] - lo[ax]) / (hi[ax] - lo[ax]) * p
        # ceil(rel) - 1 puts boundary points in the lower block
        b = np.ceil(np.round(rel, 9)).astype(np.int64) - 1
        block.append(np.clip(b, 0, p - 1))
    flat = np.ravel_multi_index(tuple(block), layout)
    subs = tuple(np.flatnonzero(flat == s) for s in range(int(np.prod(layout))))
    return Partition(subdomains=subs, layout=layout, n_points=len(points))


@dataclass
class SubdomainReduction:
    s: int
    point_index: np.ndarray
    rotation: np.ndarray  # (d, r)
    local_eigs: np.ndarray  # all mu^s, descending
    local_modes: np.ndarray  # b^s_i as rows over the subdomain points
    expansion: GpcExpansion | None = None
    n_evals: int = 0

    @property
    def r(self) -> int:
        return self.rotation.shape[1]

    def energy_ratio(self) -> float:
        return float(np.sum(self.local_eigs[: self.r]) / np.sum(self.local_eigs))

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "point_index": self.point_index.tolist(),
            "rotation": self.rotation.tolist(),
            "local_eigs": self.local_eigs.tolist(),
            "local_modes": self.local_modes.tolist(),
            "expansion": None if self.expansion is None else self.expansion.to_dict(),
            "n_evals": self.n_evals,
        }

    @classmethod
    def from_dict(cls, doc) -> "SubdomainReduction":
        return cls(
            s=int(doc["s"]),
            point_index=np.asarray(doc["point_index"], dtype=np.int64),
            rotation=np.asarray(doc["rotation"], dtype=float),
            local_eigs=np.asarray(doc["local_eigs"], dtype=float),
            local_modes=np.asarray(doc["local_modes"], dtype=float),
            expansion=None if doc["expansion"] is None
            else GpcExpansion.from_dict(doc["expansion"]),
            n_evals=int(doc.get("n_evals", 0)),
        )


def coarse_solve(model, d: int | None = None, level: int = 2) -> tuple[GpcExpansion, int]:
    """Degree-1 expansion in the full dimension; returns it with the solve count."""
    if level < 2:
        raise ValueError(f"coarse level must be >= 2, got {level}")
    d = model.dim if d is None else d
    before = model.n_evals
    u1 = assemble_gpc(model, d, 1, level=level)
    return u1, model.n_evals - before


def _degree_one_matrix(u1: GpcExpansion, point_index) -> np.ndarray:
    """(points x d) matrix with column j holding u_{e_j} on the given points."""
    if u1.max_degree < 1:
        raise ValueError("coarse expansion must have degree >= 1")
    cols = np.zeros((len(point_index), u1.dim))
    for t, ix in enumerate(u1.indices):
        if ix.total_degree == 1:
            j = int(np.flatnonzero(np.array(ix.entries))[0])
            cols[:, j] = u1.coeffs[t, point_index]
    return cols


def subdomain_kl(u1: GpcExpansion, part: Partition, s: int, r: int):
    """Eigenpairs of the coarse covariance on subdomain ``s`` and the rotation ``A^s``.

    Uses the SVD of the weighted degree-1 coefficient matrix: squared
    singular values are the eigenvalues, right singular vectors the
    columns of ``A^s``.  Returns ``(mu, b, A)`` with ``mu`` the full
    descending spectrum (length ``min(n_s, d)``), ``b`` the first ``r``
    eigenfunctions as rows and ``A`` of shape (d, r).
    """
    idx = part[s]
    n_s = len(idx)
    if not 1 <= r <= min(u1.dim, n_s):
        raise ValueError(f"r={r} must lie in [1, min(d={u1.dim}, n_points={n_s})]")
    w = 1.0 / n_s
    M = np.sqrt(w) * _degree_one_matrix(u1, idx)
    U, sv, Vt = np.linalg.svd(M, full_matrices=False)
    rank = int(np.sum(sv > RANK_TOL * sv[0])) if sv.size and sv[0] > 0 else 0
    if r > rank:
        raise ValueError(f"r={r} exceeds the numerical rank {rank} of subdomain {s}")
    A = Vt[:r].T.copy()
    B = U[:, :r].T / np.sqrt(w)
    # largest-magnitude entry of each rotation column positive
    flip = np.sign(A[np.argmax(np.abs(A), axis=0), np.arange(r)])
    A *= flip
    B *= flip[:, None]
    return sv**2, B, A


def reduce_subdomain(u1: GpcExpansion, part: Partition, s: int, r: int) -> SubdomainReduction:
    mu, b, A = subdomain_kl(u1, part, s, r)
    red = SubdomainReduction(s=s, point_index=part[s], rotation=A, local_eigs=mu, local_modes=b)
    logger.info("subdomain %d: r=%d captures %.4f of the coarse variance", s, r,
                red.energy_ratio())
    return red


def reduced_gpc(model, red: SubdomainReduction, N_s: int, level: int | None = None,
                tau: float = 1.0) -> GpcExpansion:
    """Local expansion in ``eta`` with the model evaluated at ``xi = A eta``."""
    level = default_level(N_s) if level is None else level
    before = model.n_evals
    e = assemble_gpc(model, red.r, N_s, level=level, tau=tau, rotation=red.rotation,
                     point_index=red.point_index)
    red.n_evals = model.n_evals - before
    return e


def local_surrogate(red: SubdomainReduction, tau: float) -> GpcExpansion:
    if red.expansion is None:
        raise ValueError(f"subdomain {red.s} has no local expansion")
    return rescale(red.expansion, check_tau(tau))


def assemble_global(reductions, moments, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Scatter per-subdomain (mean, variance) pairs into global fields."""
    check_coverage([red.point_index for red in reductions], n_points)
    mean = np.empty(n_points)
    var = np.empty(n_points)
    for red, (m, v) in zip(reductions, moments):
        mean[red.point_index] = m
        var[red.point_index] = v
    return mean, var


class DDResult:
    """Coarse solution plus all subdomain reductions, with persistence."""

    def __init__(self, coarse: GpcExpansion, reductions, coarse_evals: int, n_points: int,
                 layout=()):
        self.coarse = coarse
        self.reductions = list(reductions)
        self.coarse_evals = coarse_evals
        self.n_points = n_points
        self.layout = tuple(layout)

    @property
    def total_evals(self) -> int:
        return self.coarse_evals + sum(red.n_evals for red in self.reductions)

    def moments(self, tau: float = 1.0):
        if tau == 1.0:
            mom = [gpc_moments(red.expansion) for red in self.reductions]
        else:
            mom = [surrogate_moments(local_surrogate(red, tau)) for red in self.reductions]
        return assemble_global(self.reductions, mom, self.n_points)

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.coarse.save(directory / "coarse.json")
        manifest = {"n_points": self.n_points, "coarse_evals": self.coarse_evals,
                    "layout": list(self.layout), "subdomains": []}
        for red in self.reductions:
            name = f"subdomain_{red.s}.json"
            (directory / name).write_text(json.dumps(red.to_dict()))
            idx = red.point_index
            manifest["subdomains"].append({
                "s": red.s, "file": name, "n_points": int(len(idx)),
                "index_min": int(idx.min()), "index_max": int(idx.max()),
                "r": red.r, "n_evals": red.n_evals,
            })
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))

    @classmethod
    def load(cls, directory) -> "DDResult":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        reds = [SubdomainReduction.from_dict(json.loads((directory / e["file"]).read_text()))
                for e in manifest["subdomains"]]
        return cls(GpcExpansion.load(directory / "coarse.json"), reds,
                   manifest["coarse_evals"], manifest["n_points"], manifest.get("layout", ()))


def run_dd(model, part: Partition, r: int, N_s: int, level: int | None = None,
           coarse_level: int = 2, tau: float = 1.0, coarse: GpcExpansion | None = None) -> DDResult:
    """Full pipeline: coarse solve, per-subdomain reduction and local expansions.

    With ``tau < 1`` the local expansions are assembled directly at the
    reduced standard deviation (reference runs); the coarse solution and
    rotations are always those of the maximum-variance field.
    """
    coarse_evals = 0
    if coarse is None:
        coarse, coarse_evals = coarse_solve(model, level=coarse_level)
    reds = []
    for s in range(len(part)):
        red = reduce_subdomain(coarse, part, s, r)
        red.expansion = reduced_gpc(model, red, N_s, level=level, tau=tau)
        reds.append(red)
    return DDResult(coarse, reds, coarse_evals, part.n_points, part.layout)
