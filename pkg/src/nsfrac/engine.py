"""Non-stationary alpha-fractal functions.

Two independent evaluation routes are provided:

* grid iteration: Read-Bajraktarevic operators applied on a refinement grid
  (closed under the inverse maps, so every application is exact) and
  composed as backward trajectories ``T_1 o T_2 o ... o T_m g``;
* the pointwise series ``f(x) + sum_l pi_l (f - b_l)(xi_l)`` along the orbit
  of ``x`` under the inverse maps, truncated with a certified tail bound.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    DEFAULT_MAX_LEVELS,
    BaseScheme,
    Partition,
    RefinementGrid,
    SampledFunction,
    ScalingScheme,
)
from .errors import EndpointMismatch, InvalidScaling, NoConvergence, OutOfDomain

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class FractalSpec:
    """Germ ``f``, partition, scaling family and base family."""

    germ: SampledFunction
    partition: Partition
    scaling: ScalingScheme
    base: BaseScheme
    require_distinct_base: bool = True

    def __post_init__(self):
        p = self.partition
        if self.scaling.n_intervals != p.n_intervals:
            raise InvalidScaling(
                f"scaling lists {self.scaling.n_intervals} intervals, partition has {p.n_intervals}"
            )
        if not np.allclose(self.scaling.domain, p.domain, rtol=0, atol=p.tol):
            raise InvalidScaling("scaling domain differs from the partition domain")
        a, b = self.germ.domain
        if a > p.x0 + p.tol or b < p.xN - p.tol:
            raise OutOfDomain("germ is not defined on the whole partition domain")
        self.base.validate(self.germ, p, require_distinct=self.require_distinct_base)

    @property
    def alpha_sup(self):
        return self.scaling.sup_norm

    def base_deviation(self, points=None):
        """``sup_m ||f - b_m||`` (exact over breakpoints unless ``points`` given)."""
        return self.base.sup_deviation(self.germ, self.partition, points)


def make_spec(germ, knots, scaling, base, tail="repeat-last", max_levels=DEFAULT_MAX_LEVELS,
              require_distinct_base=True):
    """Convenience constructor from plain lists.

    ``scaling`` is a list of levels (see :class:`ScalingScheme`) and ``base``
    a list of :class:`BaseOperator` / :class:`SampledFunction` entries.
    """
    p = Partition(knots)
    if not isinstance(scaling, ScalingScheme):
        scaling = ScalingScheme(scaling, domain=p.domain, tail=tail, max_levels=max_levels)
    if not isinstance(base, BaseScheme):
        base = BaseScheme(base)
    if not isinstance(germ, SampledFunction):
        germ = SampledFunction.from_callable(germ, np.linspace(p.x0, p.xN, 1025))
    return FractalSpec(germ, p, scaling, base, require_distinct_base)


# ---------------------------------------------------------------------------
# grid iteration


class GridOperators:
    """The operators ``T^{alpha_m}`` restricted to one refinement grid."""

    def __init__(self, spec: FractalSpec, grid: RefinementGrid):
        if grid.partition is not spec.partition and not np.array_equal(
            grid.partition.knots, spec.partition.knots
        ):
            raise ValueError("grid was built for a different partition")
        self.spec = spec
        self.grid = grid
        self.f = grid.sample(spec.germ)
        self._levels = {}

    def level(self, m):
        cached = self._levels.get(m)
        if cached is None:
            spec, grid = self.spec, self.grid
            alpha = spec.scaling.values(m, grid.preimage, grid.interval)
            b = spec.base.function(m, spec.germ, spec.partition)(grid.preimage)
            cached = self._levels[m] = (alpha, b)
        return cached

    def apply(self, g, m):
        alpha, b = self.level(m)
        return self.f + alpha * (g[self.grid.preimage_index] - b)

    def check_endpoints(self, g):
        scale = 1e-12 * (1.0 + abs(self.f[0]) + abs(self.f[-1]))
        if abs(g[0] - self.f[0]) > scale or abs(g[-1] - self.f[-1]) > scale:
            raise EndpointMismatch("initial function must agree with f at x_0 and x_N")

    def compose(self, g, m):
        """``T^{alpha_1} o ... o T^{alpha_m} g`` (innermost operator is level m)."""
        for k in range(m, 0, -1):
            g = self.apply(g, k)
        return g


def _resolve_grid(spec, grid, depth):
    if grid is not None:
        return grid
    if depth is None:
        raise ValueError("either a grid or a depth is required")
    return RefinementGrid.build(spec.partition, depth)


def apply_rb(g, m: int, spec: FractalSpec, grid: RefinementGrid) -> SampledFunction:
    """One application of the level-``m`` Read-Bajraktarevic operator.

    ``(T g)(x) = f(x) + alpha_{i,m}(Q_i x) (g - b_m)(Q_i x)`` for ``x`` in I_i.
    """
    ops = GridOperators(spec, grid)
    values = grid.sample(g)
    ops.check_endpoints(values)
    return SampledFunction(grid.points, ops.apply(values, m))


@dataclass
class TrajectoryReport:
    """Log of a backward trajectory run.

    ``levels`` is the index ``m`` of the last distance computed and
    ``function`` is ``psi_{m+1} g``. ``distances[k]`` is
    ``d_{k+1} = ||psi_{k+2} g - psi_{k+1} g||``; ``ratio``
    is the geometric mean of consecutive distance ratios above the noise
    floor (``None`` when no such pair exists).
    """

    levels: int
    distances: list
    ratio: Optional[float]
    converged: bool
    function: SampledFunction
    tol: float
    noise_floor: float = 0.0

    def to_dict(self):
        return {
            "levels": self.levels,
            "distances": [float(d) for d in self.distances],
            "ratio": self.ratio,
            "converged": self.converged,
            "tol": self.tol,
            "noise_floor": self.noise_floor,
        }


def distance_ratio(distances, floor=0.0):
    """Geometric mean of ``d_{m+1}/d_m`` over pairs with both terms above ``floor``."""
    logs = [
        math.log(d1 / d0)
        for d0, d1 in zip(distances, distances[1:])
        if d0 > floor and d1 > floor
    ]
    if not logs:
        return None
    return math.exp(sum(logs) / len(logs))


def backward_trajectory(g0, spec: FractalSpec, depth: Optional[int] = None,
                        max_levels: Optional[int] = None, tol: float = 1e-10,
                        grid: Optional[RefinementGrid] = None) -> TrajectoryReport:
    """Run ``psi_m g0 = T^{alpha_1} o ... o T^{alpha_m} g0`` until successive
    sup-distances drop below ``tol``.

    Each ``psi_m`` is recomputed from scratch since new levels enter on the
    inside of the composition. ``g0=None`` starts from the germ.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = _resolve_grid(spec, grid, depth)
    M = spec.scaling.max_levels if max_levels is None else int(max_levels)
    if M < 1:
        raise ValueError("max_levels must be >= 1")
    ops = GridOperators(spec, grid)
    g = ops.f.copy() if g0 is None else grid.sample(g0)
    ops.check_endpoints(g)

    scale = max(1.0, float(np.max(np.abs(ops.f))), float(np.max(np.abs(g))))
    floor = 10 * EPS * scale
    prev = ops.compose(g, 1)
    distances = []
    for m in range(1, M + 1):
        cur = ops.compose(g, m + 1)
        d = float(np.max(np.abs(cur - prev)))
        distances.append(d)
        prev = cur
        if d <= tol:
            return TrajectoryReport(
                levels=m,
                distances=distances,
                ratio=distance_ratio(distances, floor),
                converged=True,
                function=SampledFunction(grid.points, cur),
                tol=tol,
                noise_floor=floor,
            )
    report = TrajectoryReport(
        levels=M,
        distances=distances,
        ratio=distance_ratio(distances, floor),
        converged=False,
        function=SampledFunction(grid.points, prev),
        tol=tol,
        noise_floor=floor,
    )
    raise NoConvergence(
        f"backward trajectory not within tol={tol:g} after {M} levels",
        report=report,
        last_distance=distances[-1] if distances else None,
    )


def stationary_fixed_point(m: int, spec: FractalSpec, grid: Optional[RefinementGrid] = None,
                           tol: float = 1e-10, depth: Optional[int] = None,
                           max_iter: int = 10_000) -> SampledFunction:
    """Fixed point of the single operator ``T^{alpha_m}`` by Picard iteration."""
    grid = _resolve_grid(spec, grid, depth)
    ops = GridOperators(spec, grid)
    g = ops.f.copy()
    for _ in range(max_iter):
        nxt = ops.apply(g, m)
        change = float(np.max(np.abs(nxt - g)))
        g = nxt
        if change <= tol:
            return SampledFunction(grid.points, g)
    raise NoConvergence(f"fixed-point iteration of level {m} did not reach tol={tol:g}")


def functional_equation_residual(g, m: int, spec: FractalSpec, grid: RefinementGrid) -> float:
    """``sup |T^{alpha_m} g - g|`` on the grid."""
    ops = GridOperators(spec, grid)
    values = grid.sample(g)
    return float(np.max(np.abs(ops.apply(values, m) - values)))


# ---------------------------------------------------------------------------
# series evaluation


def truncation_level(spec: FractalSpec, tol: float) -> int:
    """Smallest L with ``s**(L+1) / (1 - s) * sup_m ||f - b_m|| <= tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    s = spec.alpha_sup
    B = spec.base_deviation()
    if s == 0.0 or B == 0.0:
        return 0
    L = 0
    tail = s * B / (1.0 - s)
    while tail > tol:
        tail *= s
        L += 1
    return L


class _SeriesContext:
    def __init__(self, spec):
        self.spec = spec
        self._bases = {}

    def base(self, level):
        key = min(level, self.spec.base.n_explicit)
        b = self._bases.get(key)
        if b is None:
            b = self._bases[key] = self.spec.base.function(key, self.spec.germ, self.spec.partition)
        return b


def _check_domain(xs, p):
    xs = np.asarray(xs, dtype=float)
    bad = (xs < p.x0 - p.tol) | (xs > p.xN + p.tol) | ~np.isfinite(xs)
    if np.any(bad):
        raise OutOfDomain(f"x={xs[bad][0]!r} outside [{p.x0}, {p.xN}]")
    return xs


def _series_many(xs, spec, L, ctx):
    p = spec.partition
    maps = p.maps
    f = spec.germ
    xi = p._snap(xs)
    total = f(xi)
    weight = np.ones_like(xi)
    active = np.flatnonzero((xi != p.x0) & (xi != p.xN))
    for level in range(1, L + 1):
        if active.size == 0:
            break
        cur = xi[active]
        i0 = p._locate0(cur)
        nxt = p._snap((cur - maps.offsets[i0]) / maps.slopes[i0])
        w = weight[active] * ctx.spec.scaling.values(level, nxt, i0)
        b = ctx.base(level)
        total[active] += w * (f(nxt) - b(nxt))
        weight[active] = w
        xi[active] = nxt
        # once the orbit reaches an endpoint it stays there and f - b_l vanishes
        active = active[(nxt != p.x0) & (nxt != p.xN)]
    return total


def evaluate_series_many(xs, spec: FractalSpec, tol: float = 1e-12,
                         workers: Optional[int] = None) -> np.ndarray:
    """Vectorised :func:`evaluate_series`; chunks may run on ``workers`` threads.

    Results are assembled in input order, so output does not depend on the
    number of workers.
    """
    p = spec.partition
    xs = _check_domain(np.atleast_1d(xs), p)
    L = truncation_level(spec, tol)
    ctx = _SeriesContext(spec)
    # fill the base cache before any threads start
    for level in range(1, min(L, spec.base.n_explicit) + 1):
        ctx.base(level)
    if workers is None:
        workers = default_workers()
    chunks = np.array_split(xs, max(1, min(workers, xs.size // 4096 + 1)))
    if len(chunks) == 1:
        return _series_many(xs, spec, L, ctx)
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(lambda c: _series_many(c, spec, L, ctx), chunks))
    return np.concatenate(parts)


def evaluate_series(x: float, spec: FractalSpec, tol: float = 1e-12) -> float:
    """``f_b^alpha(x)`` with absolute error at most ``tol``.

    Sums ``f(x) + sum_{l>=1} pi_l (f - b_l)(xi_l)`` where ``xi_l`` is the
    inverse-map orbit of ``x`` and ``pi_l`` the product of the scaling
    functions along it.
    """
    return float(evaluate_series_many([x], spec, tol, workers=1)[0])


def series_terms(x: float, spec: FractalSpec, tol: float = 1e-12) -> list:
    """The individual terms ``pi_l (f - b_l)(xi_l)`` summed by :func:`evaluate_series`."""
    p = spec.partition
    maps = p.maps
    xi = float(p._snap(_check_domain([x], p))[0])
    L = truncation_level(spec, tol)
    ctx = _SeriesContext(spec)
    terms = []
    weight = 1.0
    for level in range(1, L + 1):
        if xi in (p.x0, p.xN):
            break
        i0 = int(p._locate0(xi))
        xi = float(p._snap((xi - maps.offsets[i0]) / maps.slopes[i0]))
        weight *= float(spec.scaling.values(level, xi, i0))
        b = ctx.base(level)
        terms.append(weight * float(spec.germ(xi) - b(xi)))
    return terms


def default_workers():
    env = os.environ.get("NSFRAC_THREADS")
    cpus = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cpus))
        except ValueError:
            pass
    return 1
