"""Domain types shared by every other module.

Interval indices in the public API are 1-based (``i = 1..N``) to match the
usual notation ``I_i = [x_{i-1}, x_i]``; array-level helpers prefixed with an
underscore work 0-based.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass
from functools import cached_property
from numbers import Real
from typing import Sequence, Union

import numpy as np

from .errors import (
    GridNotClosed,
    InvalidBase,
    InvalidScaling,
    NonMonotoneKnots,
    OutOfDomain,
    OutOfInterval,
    TooFewKnots,
)

#: relative tolerance (times |I|) used for deduplication and knot snapping
REL_TOL = 1e-12

#: default cap on the number of levels of a non-stationary scheme
DEFAULT_MAX_LEVELS = 64


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


class SampledFunction:
    """A function given by samples and read as piecewise linear between them.

    All norms and variations in the package are computed exactly for this
    class of functions.
    """

    __slots__ = ("abscissae", "values")

    def __init__(self, abscissae, values):
        x = _frozen(abscissae)
        y = _frozen(values)
        if x.ndim != 1 or y.shape != x.shape:
            raise ValueError("abscissae and values must be 1-d arrays of equal length")
        if x.size < 2:
            raise ValueError("a sampled function needs at least two samples")
        if not np.all(np.diff(x) > 0):
            raise ValueError("abscissae must be strictly increasing")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("samples must be finite")
        self.abscissae = x
        self.values = y

    @classmethod
    def from_callable(cls, func, points):
        points = np.asarray(points, dtype=float)
        return cls(points, np.asarray(func(points), dtype=float))

    @property
    def domain(self):
        return float(self.abscissae[0]), float(self.abscissae[-1])

    def __len__(self):
        return self.abscissae.size

    def __call__(self, x):
        return np.interp(x, self.abscissae, self.values)

    def __repr__(self):
        a, b = self.domain
        return f"SampledFunction(n={len(self)}, domain=[{a:g}, {b:g}])"

    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    def on(self, points):
        """Resample onto ``points`` (exact when ``points`` contains every breakpoint)."""
        points = np.asarray(points, dtype=float)
        return SampledFunction(points, self(points))

    def rescaled_to_unit(self):
        a, b = self.domain
        x = (self.abscissae - a) / (b - a)
        x[0], x[-1] = 0.0, 1.0
        return SampledFunction(x, self.values)

    def _combine(self, other, op):
        if isinstance(other, SampledFunction):
            if self.abscissae.shape == other.abscissae.shape and np.array_equal(
                self.abscissae, other.abscissae
            ):
                return SampledFunction(self.abscissae, op(self.values, other.values))
            # piecewise-linear sums live on the union of breakpoints
            x = np.union1d(self.abscissae, other.abscissae)
            return SampledFunction(x, op(self(x), other(x)))
        if isinstance(other, Real):
            return SampledFunction(self.abscissae, op(self.values, float(other)))
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return self._combine(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return SampledFunction(self.abscissae, -self.values)


# ---------------------------------------------------------------------------
# partitions and the affine maps l_i


@dataclass(frozen=True)
class AffineMapFamily:
    """The maps ``l_i(x) = a_i x + e_i`` sending I onto I_i."""

    slopes: np.ndarray
    offsets: np.ndarray
    domain: tuple

    @property
    def lipschitz(self):
        return float(np.max(self.slopes))

    def forward(self, x, i):
        return self.slopes[i - 1] * x + self.offsets[i - 1]

    def inverse(self, x, i):
        return (x - self.offsets[i - 1]) / self.slopes[i - 1]


class Partition:
    """Strictly increasing knots ``x_0 < x_1 < ... < x_N`` with ``N >= 2``."""

    def __init__(self, knots):
        knots = _frozen(knots)
        if knots.ndim != 1 or knots.size < 3:
            raise TooFewKnots(f"need at least 3 knots, got {knots.size}")
        if not np.all(np.isfinite(knots)):
            raise NonMonotoneKnots("knots must be finite")
        if not np.all(np.diff(knots) > 0):
            raise NonMonotoneKnots("knots must be strictly increasing", knots=knots.tolist())
        self.knots = knots

    def __repr__(self):
        return f"Partition({self.knots.tolist()})"

    @property
    def n_intervals(self):
        return self.knots.size - 1

    @property
    def x0(self):
        return float(self.knots[0])

    @property
    def xN(self):
        return float(self.knots[-1])

    @property
    def domain(self):
        return self.x0, self.xN

    @property
    def length(self):
        return self.xN - self.x0

    @property
    def tol(self):
        return REL_TOL * self.length

    @cached_property
    def maps(self):
        a = np.diff(self.knots) / self.length
        e = self.knots[:-1] - a * self.x0
        a.setflags(write=False)
        e.setflags(write=False)
        return AffineMapFamily(a, e, self.domain)

    def is_uniform(self):
        steps = np.diff(self.knots)
        return bool(np.allclose(steps, steps[0], rtol=0, atol=self.tol))

    def _locate0(self, x):
        """Vectorised 0-based interval index, half-open with x_N in the last interval."""
        idx = np.searchsorted(self.knots, x, side="right") - 1
        return np.clip(idx, 0, self.n_intervals - 1)

    def _snap(self, x):
        """Snap values within tolerance of a knot onto it, clip into the domain."""
        x = np.clip(np.asarray(x, dtype=float), self.x0, self.xN)
        j = np.clip(np.searchsorted(self.knots, x), 1, self.knots.size - 1)
        left = self.knots[j - 1]
        right = self.knots[j]
        x = np.where(np.abs(x - left) <= self.tol, left, x)
        x = np.where(np.abs(x - right) <= self.tol, right, x)
        return x


def build_partition(knots: Sequence[float]):
    """Return ``(partition, maps)`` for the given knots.

    >>> p, maps = build_partition([0, 0.25, 1])
    >>> maps.slopes.tolist(), maps.offsets.tolist()
    ([0.25, 0.75], [0.0, 0.25])
    """
    p = Partition(knots)
    return p, p.maps


def locate_interval(x: float, p: Partition) -> int:
    """1-based index i with ``x`` in ``[x_{i-1}, x_i)``; ``x_N`` belongs to ``I_N``."""
    x = float(x)
    if not (p.x0 - p.tol <= x <= p.xN + p.tol):
        raise OutOfDomain(f"x={x!r} outside [{p.x0}, {p.xN}]")
    i = bisect.bisect_right(p.knots.tolist(), x)
    return min(max(i, 1), p.n_intervals)


def inverse_map(x: float, i: int, p: Partition) -> float:
    """``Q_i(x) = l_i^{-1}(x)``, defined for ``x`` in ``I_i``."""
    if not 1 <= i <= p.n_intervals:
        raise OutOfInterval(f"interval index {i} not in 1..{p.n_intervals}")
    lo, hi = p.knots[i - 1], p.knots[i]
    if not (lo - p.tol <= x <= hi + p.tol):
        raise OutOfInterval(f"x={x!r} not in I_{i} = [{lo}, {hi}]")
    y = float(p.maps.inverse(x, i))
    return float(p._snap(min(max(y, p.x0), p.xN)))


def _dedup_sorted(x, tol):
    x = np.sort(x)
    keep = np.ones(x.size, dtype=bool)
    keep[1:] = np.diff(x) > tol
    return x[keep]


def refinement_points(p: Partition, depth: int) -> np.ndarray:
    """All images ``l_{i_1} o ... o l_{i_k}(x_j)`` with ``k <= depth``, sorted.

    The set is closed under every ``Q_i`` restricted to ``I_i``; on a uniform
    partition it has ``N**(depth+1) + 1`` points.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    maps = p.maps
    pts = p.knots.copy()
    for _ in range(depth):
        images = (maps.slopes[:, None] * pts[None, :] + maps.offsets[:, None]).ravel()
        pts = _dedup_sorted(images, p.tol)
    pts = p._snap(pts)
    pts[0], pts[-1] = p.x0, p.xN
    return _dedup_sorted(pts, p.tol)


class RefinementGrid:
    """Grid closed under the inverse maps, with the pullback tables precomputed.

    ``interval[k]`` is the 0-based interval owning ``points[k]`` and
    ``preimage_index[k]`` the grid index of ``Q_i(points[k])``.
    """

    def __init__(self, partition: Partition, points, depth=None):
        self.partition = partition
        self.depth = depth
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 1 or pts.size < 2 or not np.all(np.diff(pts) > 0):
            raise ValueError("grid points must be strictly increasing")
        if pts[0] != partition.x0 or pts[-1] != partition.xN:
            raise GridNotClosed("grid must start at x_0 and end at x_N")
        pts = pts.copy()
        pts.setflags(write=False)
        self.points = pts

        maps = partition.maps
        interval = partition._locate0(pts)
        pre = partition._snap((pts - maps.offsets[interval]) / maps.slopes[interval])
        j = np.clip(np.searchsorted(pts, pre), 1, pts.size - 1)
        nearest = np.where(np.abs(pts[j - 1] - pre) <= np.abs(pts[j] - pre), j - 1, j)
        miss = np.abs(pts[nearest] - pre)
        spacing = float(np.min(np.diff(pts)))
        tol = min(1e-10 * partition.length, 0.25 * spacing)
        if np.any(miss > tol):
            k = int(np.argmax(miss))
            raise GridNotClosed(
                f"Q-image of grid point {pts[k]!r} misses the grid by {miss[k]:.3g}",
                point=float(pts[k]),
                miss=float(miss[k]),
            )
        self.interval = interval
        self.preimage_index = nearest
        self.preimage = pts[nearest]

    @classmethod
    def build(cls, partition: Partition, depth: int):
        return cls(partition, refinement_points(partition, depth), depth=depth)

    def __len__(self):
        return self.points.size

    def __repr__(self):
        return f"RefinementGrid(n={len(self)}, depth={self.depth})"

    @property
    def max_spacing(self):
        return float(np.max(np.diff(self.points)))

    def sample(self, g):
        """Values of ``g`` (SampledFunction, callable or array) on the grid."""
        if isinstance(g, SampledFunction):
            return g(self.points)
        if callable(g):
            return np.asarray(g(self.points), dtype=float)
        g = np.asarray(g, dtype=float)
        if g.shape != self.points.shape:
            raise ValueError("array length does not match the grid")
        return g


def depth_for_spacing(partition: Partition, spacing: float) -> int:
    """Smallest depth whose refinement grid has gaps no wider than ``spacing``."""
    amax = float(np.max(partition.maps.slopes))
    widest = float(np.max(np.diff(partition.knots)))
    depth = 0
    while widest > spacing:
        widest *= amax
        depth += 1
    return depth


# ---------------------------------------------------------------------------
# scaling functions alpha_{i,m}(x) = p + q x

ScalingEntry = Union[float, tuple, dict]


def _parse_scaling_entry(entry):
    if isinstance(entry, Real):
        return float(entry), 0.0
    if isinstance(entry, dict):
        if "constant" in entry:
            return float(entry["constant"]), 0.0
        return float(entry.get("p", 0.0)), float(entry.get("q", 0.0))
    p, q = entry
    return float(p), float(q)


class ScalingScheme:
    """Per-interval, per-level scaling functions ``alpha_{i,m}(x) = p + q x``.

    ``levels[m-1]`` lists the N entries of level m; each entry is a constant
    or an affine pair ``(p, q)``. Levels past the explicit list follow
    ``tail``: ``"repeat-last"`` or a decay factor ``r`` in [0, 1), in which
    case level ``M + k`` is level ``M`` multiplied by ``r**k``.
    """

    def __init__(self, levels, domain=(0.0, 1.0), tail="repeat-last",
                 max_levels=DEFAULT_MAX_LEVELS):
        if not levels:
            raise InvalidScaling("at least one level of scaling functions is required")
        parsed = []
        for m, level in enumerate(levels, start=1):
            coeffs = np.array([_parse_scaling_entry(e) for e in level], dtype=float)
            if coeffs.ndim != 2 or coeffs.shape[0] == 0:
                raise InvalidScaling(f"level {m} is empty")
            coeffs.setflags(write=False)
            parsed.append(coeffs)
        n = parsed[0].shape[0]
        if any(c.shape[0] != n for c in parsed):
            raise InvalidScaling("every level must list one entry per interval")
        if tail != "repeat-last":
            try:
                tail = float(tail)
            except (TypeError, ValueError):
                raise InvalidScaling(f"unknown tail rule {tail!r}") from None
            if not 0.0 <= tail < 1.0:
                raise InvalidScaling("geometric tail factor must lie in [0, 1)")
        if int(max_levels) < 1:
            raise InvalidScaling("max_levels must be >= 1")
        self._levels = tuple(parsed)
        self.domain = (float(domain[0]), float(domain[1]))
        self.tail = tail
        self.max_levels = int(max_levels)
        sup = self.sup_norm
        if not sup < 1.0:
            raise InvalidScaling(f"sup-norm of the scaling family is {sup!r}, must be < 1")

    @classmethod
    def constant(cls, values, levels=1, **kwargs):
        """Same constants ``values`` (one per interval) on ``levels`` explicit levels."""
        return cls([list(values)] * levels, **kwargs)

    def __repr__(self):
        return (f"ScalingScheme(N={self.n_intervals}, explicit={self.n_explicit}, "
                f"tail={self.tail!r}, sup={self.sup_norm:.4g})")

    @property
    def n_intervals(self):
        return self._levels[0].shape[0]

    @property
    def n_explicit(self):
        return len(self._levels)

    @property
    def is_constant(self):
        return all(np.all(c[:, 1] == 0.0) for c in self._levels)

    def coefficients(self, m):
        """``(p, q)`` arrays of level ``m`` (1-based)."""
        if m < 1:
            raise ValueError("levels are numbered from 1")
        M = self.n_explicit
        if m <= M:
            c = self._levels[m - 1]
        elif self.tail == "repeat-last":
            c = self._levels[-1]
        else:
            c = self._levels[-1] * self.tail ** (m - M)
        return c[:, 0], c[:, 1]

    def values(self, m, x, interval0):
        """``alpha_{i,m}(x)`` for 0-based interval indices (vectorised)."""
        p, q = self.coefficients(m)
        return p[interval0] + q[interval0] * x

    def level_sup(self, m):
        p, q = self.coefficients(m)
        a, b = self.domain
        return float(np.max(np.maximum(np.abs(p + q * a), np.abs(p + q * b))))

    @property
    def sup_norm(self):
        # the tail never exceeds the last explicit level
        return max(self.level_sup(m) for m in range(1, self.n_explicit + 1))

    def as_list(self):
        return [[[float(p), float(q)] for p, q in c] for c in self._levels]


# ---------------------------------------------------------------------------
# base functions b_m


@dataclass(frozen=True)
class BaseOperator:
    """Endpoint-preserving linear operator ``L`` with ``b_m = L f``.

    ``chord`` is the affine interpolant through the two endpoints, ``knot_pl``
    the piecewise-linear interpolant at the partition knots, ``blend`` the
    combination ``(1 - t) chord + t knot_pl``.
    """

    kind: str
    t: float = 0.0

    KINDS = ("chord", "knot_pl", "blend")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidBase(f"unknown base operator {self.kind!r}")
        if self.kind == "blend" and not 0.0 <= self.t <= 1.0:
            raise InvalidBase("blend weight must lie in [0, 1]")

    @property
    def weight(self):
        return {"chord": 0.0, "knot_pl": 1.0}.get(self.kind, self.t)

    #: sup-norm operator norm; every built-in takes convex combinations of samples
    norm = 1.0
    #: ``||Id - L||`` in the sup norm
    id_minus_norm = 2.0

    def apply(self, f, partition: Partition) -> SampledFunction:
        knots = partition.knots
        fk = np.asarray(f(knots), dtype=float)
        t = self.weight
        chord = fk[0] + (fk[-1] - fk[0]) * (knots - knots[0]) / (knots[-1] - knots[0])
        vals = (1.0 - t) * chord + t * fk
        vals[0], vals[-1] = fk[0], fk[-1]
        return SampledFunction(knots, vals)

    def describe(self):
        return self.kind if self.kind != "blend" else {"blend": self.t}


BaseEntry = Union[BaseOperator, SampledFunction]


class BaseScheme:
    """Level rule for the base functions: explicit list, last entry repeated."""

    def __init__(self, levels: Sequence[BaseEntry]):
        if not levels:
            raise InvalidBase("at least one base level is required")
        for entry in levels:
            if not isinstance(entry, (BaseOperator, SampledFunction)):
                raise InvalidBase(f"unsupported base entry {entry!r}")
        self._levels = tuple(levels)

    def __repr__(self):
        return f"BaseScheme({[self._describe(e) for e in self._levels]})"

    @staticmethod
    def _describe(entry):
        if isinstance(entry, BaseOperator):
            return entry.describe()
        return {"direct": len(entry)}

    @property
    def n_explicit(self):
        return len(self._levels)

    @property
    def is_operator_family(self):
        return all(isinstance(e, BaseOperator) for e in self._levels)

    def entry(self, m):
        return self._levels[min(m, self.n_explicit) - 1]

    def function(self, m, f, partition: Partition) -> SampledFunction:
        e = self.entry(m)
        if isinstance(e, BaseOperator):
            return e.apply(f, partition)
        return e

    def validate(self, f, partition: Partition, require_distinct=True):
        """Check endpoint matching (and ``b_m != f``) for every distinct level."""
        fa, fb = float(f(partition.x0)), float(f(partition.xN))
        scale = 1e-12 * (1.0 + abs(fa) + abs(fb))
        for m in range(1, self.n_explicit + 1):
            b = self.function(m, f, partition)
            ba, bb = b.domain
            if ba > partition.x0 + partition.tol or bb < partition.xN - partition.tol:
                raise InvalidBase(f"base function of level {m} does not cover the domain")
            if abs(b(partition.x0) - fa) > scale or abs(b(partition.xN) - fb) > scale:
                raise InvalidBase(f"base function of level {m} does not match f at the endpoints")
            if require_distinct and self.deviation(m, f, partition) == 0.0:
                raise InvalidBase(f"base function of level {m} coincides with f")

    def deviation(self, m, f, partition: Partition, points=None):
        """``||f - b_m||`` on ``points`` (default: every breakpoint, so exact)."""
        b = self.function(m, f, partition)
        if points is None:
            pts = [partition.knots, b.abscissae]
            if isinstance(f, SampledFunction):
                pts.append(f.abscissae)
            points = np.unique(np.concatenate(pts))
            points = points[(points >= partition.x0) & (points <= partition.xN)]
        return float(np.max(np.abs(f(points) - b(points))))

    def sup_deviation(self, f, partition: Partition, points=None):
        """``sup_m ||f - b_m||``; the repeat-last tail adds no new levels."""
        return max(self.deviation(m, f, partition, points) for m in range(1, self.n_explicit + 1))
