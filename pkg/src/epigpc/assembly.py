"""Sparse-grid projection of a model onto a Hermite chaos basis."""
from __future__ import annotations

import numpy as np

from ._validation import check_tau
from .polychaos import GpcExpansion, project, total_degree_indices
from .sparsegrid import smolyak


def default_level(N: int) -> int:
    return N + 2


def assemble_gpc(model, d: int, N: int, level: int | None = None, tau: float = 1.0,
                 rotation=None, point_index=None) -> GpcExpansion:
    """Build the degree-``N`` expansion of ``model`` by sparse-grid projection.

    The model is evaluated at ``tau * rotation @ node`` for every node of the
    ``d``-dimensional Smolyak rule; ``rotation`` (shape (model.dim, d))
    defaults to the identity.  ``point_index`` restricts the output to a
    subset of the model's spatial points.
    """
    tau = check_tau(tau)
    level = default_level(N) if level is None else int(level)
    rule = smolyak(d, level)
    inputs = tau * rule.nodes
    if rotation is not None:
        rotation = np.asarray(rotation, dtype=float)
        if rotation.shape != (model.dim, d):
            raise ValueError(f"rotation must have shape ({model.dim}, {d}), got {rotation.shape}")
        inputs = inputs @ rotation.T
    elif d != model.dim:
        raise ValueError(f"model has dimension {model.dim}, expansion requested {d}")
    values = model.evaluate_many(inputs)
    points = np.asarray(model.spatial_points)
    if point_index is not None:
        values = values[:, point_index]
        points = points[point_index]
    indices = total_degree_indices(d, N)
    coeffs = project(indices, rule.nodes, rule.weights, values)
    return GpcExpansion(dim=d, max_degree=N, indices=indices, coeffs=coeffs,
                        spatial_points=points)
