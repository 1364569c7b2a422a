"""Adaptive data-accuracy model: steepest descent on the quadratic MMSE
objective J(w) = sigma_d^2 - 2 rdu.w + w.Ruu.w, plus node-subset selection
by sink distance with the per-size accuracy curve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import StepSizeOutOfRange, TargetUnreachable
from .fieldgen import CovariancePair, FieldParams, NodeLayout, build_spatial_covariance
from .numerics import as_vector, max_eigenvalue, solve_spd

__all__ = [
    "CovariancePair",
    "DescentTrace",
    "NodeSelection",
    "accuracy",
    "mmse",
    "optimal_weight",
    "select_nodes",
    "steepest_descent",
    "step_size_bound",
]


@dataclass(frozen=True)
class DescentTrace:
    """Iteration history of one steepest-descent run."""

    weights: tuple[np.ndarray, ...]
    mmse: tuple[float, ...]
    accuracy: tuple[float, ...]
    mu: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class NodeSelection:
    """Sink-distance node ranking with its per-prefix accuracy curve."""

    order: tuple[int, ...]
    curve: tuple[tuple[int, float], ...]
    selected: tuple[int, ...]
    achieved: float


def step_size_bound(ruu) -> float:
    """Largest stable step size 2 / lambda_max(ruu)."""
    lam = max_eigenvalue(ruu)
    if lam <= 0:
        raise ValueError("covariance has a non-positive dominant eigenvalue")
    return 2.0 / lam


def mmse(cov: CovariancePair, w) -> float:
    """Mean-square estimation error of combining weight w."""
    w = as_vector(w)
    return float(cov.sigma_d_sq - 2.0 * (cov.rdu @ w) + w @ (cov.ruu @ w))


def accuracy(cov: CovariancePair, w) -> float:
    """Normalized accuracy 1 - J(w) / sigma_d^2."""
    return 1.0 - mmse(cov, w) / cov.sigma_d_sq


def optimal_weight(cov: CovariancePair) -> np.ndarray:
    """Normal-equation solution Ruu w = rdu (the descent fixed point)."""
    return solve_spd(cov.ruu, cov.rdu)


def steepest_descent(
    cov: CovariancePair,
    w0=None,
    mu: float | None = None,
    tol: float = 1e-8,
    max_iter: int = 50_000,
) -> DescentTrace:
    """Iterate w <- w + mu (rdu - Ruu w) until the relative residual
    ||rdu - Ruu w|| / ||rdu|| drops to ``tol`` or ``max_iter`` is hit.

    ``w0`` defaults to the zero vector so the accuracy trace starts at 0;
    ``mu`` defaults to half the stability ceiling (1 / lambda_max).  A mu
    outside (0, 2/lambda_max] raises StepSizeOutOfRange; running out of
    iterations is reported through ``converged``, not an exception.
    """
    bound = step_size_bound(cov.ruu)
    if mu is None:
        mu = bound / 2.0
    if not 0.0 < mu <= bound:
        raise StepSizeOutOfRange(f"mu={mu:.6g} outside (0, {bound:.6g}]")
    w = np.zeros(cov.order) if w0 is None else as_vector(w0).copy()
    if w.size != cov.order:
        raise StepSizeOutOfRange(f"w0 has length {w.size}, expected {cov.order}")

    weights = [w.copy()]
    errs = [mmse(cov, w)]
    rdu_norm = float(np.linalg.norm(cov.rdu))
    converged = False
    iterations = 0
    while True:
        residual = cov.rdu - cov.ruu @ w
        if float(np.linalg.norm(residual)) <= tol * rdu_norm:
            converged = True
            break
        if iterations >= max_iter:
            break
        w = w + mu * residual
        iterations += 1
        weights.append(w.copy())
        errs.append(mmse(cov, w))
    acc = tuple(1.0 - j / cov.sigma_d_sq for j in errs)
    return DescentTrace(
        weights=tuple(weights),
        mmse=tuple(errs),
        accuracy=acc,
        mu=mu,
        converged=converged,
        iterations=iterations,
    )


def select_nodes(
    layout: NodeLayout,
    params: FieldParams,
    target: float | None = None,
    count: int | None = None,
) -> NodeSelection:
    """Rank nodes by ascending sink distance (id breaks ties) and evaluate
    the optimal-weight accuracy of every prefix.

    With ``target`` returns the smallest prefix reaching it (raising
    TargetUnreachable if even the full set misses); with ``count`` returns
    that prefix directly.  Exactly one of the two must be given.
    """
    if (target is None) == (count is None):
        raise ValueError("provide exactly one of target or count")
    m = layout.size
    dist = layout.sink_distances()
    ranked = sorted(range(m), key=lambda k: (dist[k], layout.node_ids[k]))
    order = tuple(layout.node_ids[k] for k in ranked)

    cov = build_spatial_covariance(layout, params)
    curve = []
    for size in range(1, m + 1):
        sub = cov.restrict(ranked[:size])
        curve.append((size, accuracy(sub, optimal_weight(sub))))
    curve = tuple(curve)

    if count is not None:
        if not 1 <= count <= m:
            raise ValueError(f"count must be in [1, {m}], got {count}")
        return NodeSelection(
            order=order,
            curve=curve,
            selected=order[:count],
            achieved=curve[count - 1][1],
        )
    if not 0.0 < target <= 1.0:
        raise ValueError(f"target must be in (0, 1], got {target}")
    for size, acc in curve:
        if acc >= target:
            return NodeSelection(
                order=order, curve=curve, selected=order[:size], achieved=acc
            )
    raise TargetUnreachable(
        f"target {target} unreachable; all {m} nodes achieve {curve[-1][1]:.6g}"
    )
