"""Monte Carlo reference moments and density estimates.

Normal draws come from a counter-based generator: sample ``i`` is a pure
function of ``(seed, i)``, so any chunking of the sample range produces
identical values.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import gaussian_kde

from ._validation import check_tau

CHUNK = 4096


def normal_block(seed: int, start: int, n: int, d: int) -> np.ndarray:
    """Standard normal draws for samples ``start .. start + n - 1``.

    Each sample owns ``ceil(d / 4)`` Philox blocks keyed by ``seed``;
    uniforms are mapped through the inverse normal CDF.
    """
    blocks = -(-d // 4)
    bg = np.random.Philox(key=int(seed))
    bg.advance(start * blocks)
    raw = bg.random_raw(n * 4 * blocks).reshape(n, 4 * blocks)[:, :d]
    u = ((raw >> np.uint64(11)).astype(float) + 0.5) / 2.0**53
    return ndtri(u)


@dataclass(frozen=True)
class McEstimate:
    n_samples: int
    mean: np.ndarray
    variance: np.ndarray
    seed: int
    tau: float = 1.0

    @property
    def std_error(self) -> np.ndarray:
        return np.sqrt(self.variance / self.n_samples)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["spatial_index", "mean", "variance", "std_error"])
            for i, (m, v, s) in enumerate(zip(self.mean, self.variance, self.std_error)):
                writer.writerow([i, repr(float(m)), repr(float(v)), repr(float(s))])


class StreamingMoments:
    """Single-pass mean/variance with Chan's pairwise merge of chunk statistics."""

    def __init__(self):
        self.n = 0
        self.mean = None
        self.m2 = None

    def update(self, batch) -> None:
        batch = np.atleast_2d(np.asarray(batch, dtype=float))
        nb = batch.shape[0]
        if nb == 0:
            return
        bmean = batch.mean(axis=0)
        bm2 = np.sum((batch - bmean) ** 2, axis=0)
        if self.n == 0:
            self.n, self.mean, self.m2 = nb, bmean, bm2
            return
        n = self.n + nb
        delta = bmean - self.mean
        self.mean = self.mean + delta * (nb / n)
        self.m2 = self.m2 + bm2 + delta**2 * (self.n * nb / n)
        self.n = n

    @property
    def variance(self) -> np.ndarray:
        return self.m2 / (self.n - 1)


def _evaluate_batch(evaluator, X, start):
    if hasattr(evaluator, "evaluate_many"):
        return evaluator.evaluate_many(X)
    out = []
    for k, xi in enumerate(X):
        try:
            out.append(np.asarray(evaluator(xi), dtype=float))
        except Exception as exc:
            raise RuntimeError(f"evaluator failed at sample {start + k}: {exc}") from exc
    return np.array(out)


def mc_moments(evaluator, d: int, n: int, seed: int = 0, tau: float = 1.0,
               chunk: int = CHUNK) -> McEstimate:
    """Monte Carlo mean and variance of ``evaluator(tau * xi)``, ``xi ~ N(0, I_d)``."""
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    tau = check_tau(tau)
    acc = StreamingMoments()
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        X = tau * normal_block(seed, start, m, d)
        acc.update(_evaluate_batch(evaluator, X, start))
    return McEstimate(n_samples=n, mean=acc.mean, variance=np.maximum(acc.variance, 0.0),
                      seed=seed, tau=tau)


@dataclass
class DensityEstimate:
    point_index: int
    samples: np.ndarray
    edges: np.ndarray
    counts: np.ndarray
    x: np.ndarray | None
    pdf: np.ndarray | None
    bandwidth: float | None

    def histogram_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["left_edge", "right_edge", "count"])
            for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
                writer.writerow([repr(float(lo)), repr(float(hi)), int(c)])

    def density_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "pdf"])
            if self.x is not None:
                for x, p in zip(self.x, self.pdf):
                    writer.writerow([repr(float(x)), repr(float(p))])


def estimate_density(values, point_index: int = 0, bins: int = 30,
                     n_grid: int = 512) -> DensityEstimate:
    """Histogram over [min, max] plus a Silverman-bandwidth Gaussian KDE."""
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    values = np.asarray(values, dtype=float).reshape(-1)
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        counts, edges = np.histogram(values, bins=bins)
        warnings.warn("degenerate sample: all values equal; density is a point mass",
                      RuntimeWarning, stacklevel=2)
        return DensityEstimate(point_index, values, edges, counts, None, None, None)
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    kde = gaussian_kde(values, bw_method="silverman")
    bw = float(np.sqrt(kde.covariance[0, 0]))
    x = np.linspace(lo - 5 * bw, hi + 5 * bw, n_grid)
    return DensityEstimate(point_index, values, edges, counts, x, kde(x), bw)


def sample_at_point(evaluator, d: int, point_index: int, n: int, seed: int = 0,
                    tau: float = 1.0, chunk: int = CHUNK) -> np.ndarray:
    """Values of ``evaluator(tau * xi)`` at one spatial point for ``n`` draws."""
    tau = check_tau(tau)
    out = []
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        X = tau * normal_block(seed, start, m, d)
        out.append(_evaluate_batch(evaluator, X, start)[:, point_index])
    return np.concatenate(out)


def density_at_point(evaluator, d: int, point_index: int, n: int = 10_000, seed: int = 0,
                     tau: float = 1.0, bins: int = 30) -> DensityEstimate:
    values = sample_at_point(evaluator, d, point_index, n, seed=seed, tau=tau)
    return estimate_density(values, point_index=point_index, bins=bins)
