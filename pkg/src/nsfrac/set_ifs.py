"""Sequences of iterated function systems acting on finite planar point sets.

Compact sets are represented by finite point sets, so Hausdorff distances are
exact for the represented sets and approximate for their ideal limits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from .engine import distance_ratio
from .errors import EmptySet, HypothesisFailed, NoConvergence, SummabilityDoubtful

DEDUP_TOL = 1e-12

#: trajectories stop once a set would exceed this many points
MAX_POINTS = 1_000_000


@dataclass(frozen=True)
class ContractionMap2D:
    """``w(x) = A x + t`` on the plane; Lipschitz constant is the spectral norm of A."""

    matrix: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        A = np.array(self.matrix, dtype=float).reshape(2, 2)
        t = np.array(self.translation, dtype=float).reshape(2)
        A.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "translation", t)

    @classmethod
    def similitude(cls, ratio, translation=(0.0, 0.0)):
        return cls(np.eye(2) * ratio, translation)

    @classmethod
    def towards(cls, ratio, fixed_point):
        """Homothety of the given ratio fixing ``fixed_point``."""
        c = np.asarray(fixed_point, dtype=float)
        return cls(np.eye(2) * ratio, (1.0 - ratio) * c)

    @property
    def lipschitz(self):
        return float(np.linalg.norm(self.matrix, 2))

    def __call__(self, points):
        return as_point_set(points) @ self.matrix.T + self.translation


@dataclass(frozen=True)
class IfsLevel:
    maps: tuple

    def __post_init__(self):
        maps = tuple(self.maps)
        if not maps:
            raise ValueError("an IFS level needs at least one map")
        object.__setattr__(self, "maps", maps)

    @property
    def lipschitz(self):
        return max(w.lipschitz for w in self.maps)


def as_point_set(points) -> np.ndarray:
    """``(n, 2)`` float array; scalars and 1-d lists are placed on the x-axis."""
    P = np.asarray(points, dtype=float)
    if P.ndim == 0:
        P = P.reshape(1)
    if P.ndim == 1:
        P = np.column_stack([P, np.zeros_like(P)])
    if P.ndim != 2 or P.shape[1] != 2:
        raise ValueError("point sets must have shape (n, 2)")
    return P


def dedupe(points, tol=DEDUP_TOL) -> np.ndarray:
    """Merge points that agree up to ``tol`` (relative to the coordinate scale).

    The result is sorted by quantised coordinates, hence deterministic.
    """
    P = as_point_set(points)
    if P.shape[0] == 0:
        return P
    scale = tol * max(1.0, float(np.max(np.abs(P))))
    keys = np.round(P / scale).astype(np.int64)
    _, idx = np.unique(keys, axis=0, return_index=True)
    return P[idx]


def hutchinson_apply(level: IfsLevel, points) -> np.ndarray:
    """``W(A) = union of w_i(A)``."""
    P = as_point_set(points)
    return dedupe(np.vstack([w(P) for w in level.maps]))


def directed_distance(A, B) -> float:
    """``sup_{a in A} inf_{b in B} |a - b|``."""
    A, B = as_point_set(A), as_point_set(B)
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise EmptySet("Hausdorff distance needs non-empty sets")
    dist, _ = cKDTree(B).query(A, k=1)
    return float(np.max(dist))


def hausdorff_distance(A, B) -> float:
    return max(directed_distance(A, B), directed_distance(B, A))


# ---------------------------------------------------------------------------
# invariant balls


def _probe_points(q, radius, n_radii=24, n_angles=32):
    radii = np.concatenate([[0.0], radius * np.geomspace(1e-3, 1.0, n_radii)])
    angles = 2 * np.pi * np.arange(n_angles) / n_angles
    ring = np.column_stack([np.cos(angles), np.sin(angles)])
    return q + (radii[:, None, None] * ring[None, :, :]).reshape(-1, 2)


def invariant_ball_radius(levels: Sequence[IfsLevel], q, mu: float, M: float,
                          probe_radius: Optional[float] = None) -> float:
    """Radius ``r = M / (1 - mu)`` of a ball around ``q`` mapped into itself.

    The hypothesis ``d(w(x), q) <= mu d(x, q) + M`` is checked for every map
    of every level on concentric rings of probe points out to
    ``probe_radius`` (default ``10 max(r, 1)``); the conclusion is checked on
    the probe points inside the ball.
    """
    if not 0.0 <= mu < 1.0:
        raise ValueError("mu must lie in [0, 1)")
    if not M > 0:
        raise ValueError("M must be positive")
    q = np.asarray(q, dtype=float).reshape(2)
    r = M / (1.0 - mu)
    probe = _probe_points(q, 10.0 * max(r, 1.0) if probe_radius is None else probe_radius)
    d_in = np.linalg.norm(probe - q, axis=1)
    slack = 1e-12 * (1.0 + r)
    for m, level in enumerate(levels, start=1):
        for k, w in enumerate(level.maps, start=1):
            d_out = np.linalg.norm(w(probe) - q, axis=1)
            bad = d_out > mu * d_in + M + slack
            if np.any(bad):
                j = int(np.argmax(d_out - mu * d_in))
                raise HypothesisFailed(
                    f"map {k} of level {m} violates d(w(x), q) <= mu d(x, q) + M "
                    f"at x={probe[j].tolist()}",
                    level=m, map=k, point=probe[j].tolist(),
                    required_M=float(np.max(d_out - mu * d_in)),
                )
            inside = d_in <= r
            if np.any(d_out[inside] > r + slack):
                raise HypothesisFailed(f"map {k} of level {m} leaves the ball of radius {r}")
    return r


# ---------------------------------------------------------------------------
# trajectories


LevelSource = Union[Callable[[int], IfsLevel], Sequence[IfsLevel]]


def level_sequence(levels: LevelSource) -> Callable[[int], IfsLevel]:
    """Callable ``m -> W_m``; a list is repeated periodically."""
    if callable(levels):
        return levels
    levels = tuple(levels)
    if not levels:
        raise ValueError("no IFS levels given")
    return lambda m: levels[(m - 1) % len(levels)]


def summability_log(levels: LevelSource, horizon: int):
    """Products ``prod_{j<=m} Lip(W_j)`` and their partial sums for ``m <= horizon``."""
    seq = level_sequence(levels)
    products, sums = [], []
    prod, total = 1.0, 0.0
    for m in range(1, horizon + 1):
        prod *= seq(m).lipschitz
        total += prod
        products.append(prod)
        sums.append(total)
    return products, sums


def looks_summable(sums, rel=1e-3):
    """Partial sums count as Cauchy when the second half of the horizon adds
    at most ``rel`` of the total."""
    half = sums[len(sums) // 2 - 1] if len(sums) >= 2 else 0.0
    return bool(np.isfinite(sums[-1]) and sums[-1] - half <= rel * sums[-1])


@dataclass
class SetTrajectoryReport:
    points: np.ndarray
    distances: list
    ratio: Optional[float]
    converged: bool
    levels: int
    products: list = field(default_factory=list)

    def to_dict(self):
        return {
            "levels": self.levels,
            "distances": [float(d) for d in self.distances],
            "ratio": self.ratio,
            "converged": self.converged,
            "n_points": int(self.points.shape[0]),
            "lipschitz_products": [float(p) for p in self.products],
        }


def backward_composition(levels: LevelSource, A0, m: int) -> np.ndarray:
    """``psi_m(A0) = W_1 o W_2 o ... o W_m (A0)``."""
    seq = level_sequence(levels)
    A = dedupe(A0)
    for k in range(m, 0, -1):
        A = hutchinson_apply(seq(k), A)
    return A


def _next_size(levels, m, size):
    return size * len(level_sequence(levels)(m).maps)


def backward_trajectory_sets(levels: LevelSource, A0, max_levels: int = 30,
                             tol: float = 1e-4, max_points: int = MAX_POINTS) -> SetTrajectoryReport:
    """Backward trajectory stopped once ``h(psi_{m+1}, psi_m) <= tol``.

    Raises :class:`SummabilityDoubtful` when the Lipschitz products are not
    numerically summable over ``max_levels`` and :class:`NoConvergence` when
    the horizon (or ``max_points``) is reached first.
    """
    products, sums = summability_log(levels, max_levels)
    if not looks_summable(sums):
        raise SummabilityDoubtful(
            f"partial sums of Lipschitz products still growing at level {max_levels}",
            last_product=products[-1], partial_sum=sums[-1],
        )
    prev = backward_composition(levels, A0, 1)
    distances = []
    for m in range(1, max_levels):
        if _next_size(levels, m + 1, prev.shape[0]) > max_points:
            break
        cur = backward_composition(levels, A0, m + 1)
        distances.append(hausdorff_distance(cur, prev))
        prev = cur
        if distances[-1] <= tol:
            return SetTrajectoryReport(cur, distances, distance_ratio(distances), True, m + 1,
                                       products[: m + 1])
    report = SetTrajectoryReport(prev, distances, distance_ratio(distances), False,
                                 len(distances) + 1, products)
    raise NoConvergence(f"set trajectory not within tol={tol:g} after {report.levels} levels",
                        report=report)


def forward_trajectory_sets(levels: LevelSource, A0, max_levels: int = 30,
                            tol: float = 1e-4, max_points: int = MAX_POINTS) -> SetTrajectoryReport:
    """Forward trajectory ``phi_m = W_m o ... o W_1 (A0)``.

    Never raises on non-convergence (forward trajectories of alternating
    families typically oscillate); the report says whether it settled.
    """
    seq = level_sequence(levels)
    prev = hutchinson_apply(seq(1), dedupe(A0))
    distances = []
    for m in range(2, max_levels + 1):
        if _next_size(levels, m, prev.shape[0]) > max_points:
            return SetTrajectoryReport(prev, distances, distance_ratio(distances), False, m - 1)
        cur = hutchinson_apply(seq(m), prev)
        distances.append(hausdorff_distance(cur, prev))
        prev = cur
        if distances[-1] <= tol:
            return SetTrajectoryReport(cur, distances, distance_ratio(distances), True, m)
    return SetTrajectoryReport(prev, distances, distance_ratio(distances), False, max_levels)
