"""Box-counting dimension of graphs of sampled functions.

Counts use the column method: over each cell ``[n delta, (n+1) delta]`` the
graph meets ``floor(R_f(S) / delta) + 1`` boxes of the mesh. For
piecewise-linear functions this is exact and sits inside the oscillation
sandwich ``R/delta <= N_delta <= 2(1/delta + 1) + R/delta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .core import RefinementGrid, SampledFunction, depth_for_spacing
from .engine import FractalSpec, backward_trajectory, evaluate_series_many
from .errors import Undersampled
from .spaces import (
    ThetaFunction,
    cell_oscillations,
    check_bv_conditions,
    check_convex_conditions,
    check_vbeta_conditions,
)

EQ_ONE = "EQ_ONE"
LEQ_TWO_MINUS_EPS = "LEQ_TWO_MINUS_EPS"
NONE = "NONE"

#: allowed distance between a slope and the dimension claim it is tested against
CLAIM_TOLERANCE = 0.15

#: refinement grids larger than this are replaced by series sampling
GRID_POINT_LIMIT = 2 ** 20


def _dyadic_exponent(delta):
    k = -math.log2(delta)
    if k < 0 or abs(k - round(k)) > 1e-12:
        raise ValueError(f"delta={delta!r} is not of the form 2**-k")
    return int(round(k))


def box_count_graph(f: SampledFunction, delta: float) -> int:
    """Number of ``delta``-mesh boxes meeting the graph of ``f`` on [0, 1]."""
    k = _dyadic_exponent(delta)
    osc = cell_oscillations(f, k)
    # osc / delta == osc * 2**k exactly, so the floor is exact
    return int(np.sum(np.floor(osc * 2.0 ** k)).astype(np.int64)) + osc.size


@dataclass
class Sandwich:
    lower: Fraction
    count: int
    upper: Fraction

    @property
    def holds(self):
        return self.lower <= self.count <= self.upper


def sandwich(f: SampledFunction, k: int) -> Sandwich:
    """Both sides of the oscillation sandwich in exact rational arithmetic."""
    osc = cell_oscillations(f, k)
    inv = 2 ** int(k)
    R = sum((Fraction(float(o)) for o in osc), Fraction(0))
    count = sum(int(math.floor(Fraction(float(o)) * inv)) + 1 for o in osc)
    return Sandwich(R * inv, count, 2 * (inv + 1) + R * inv)


@dataclass
class DimensionEstimate:
    ks: np.ndarray
    counts: np.ndarray
    slope: float
    intercept: float
    max_residual: float
    bound_tag: str = NONE
    bound_value: Optional[float] = None

    @property
    def deltas(self):
        return 2.0 ** -self.ks.astype(float)

    def to_dict(self):
        return {
            "k": self.ks.tolist(),
            "delta": self.deltas.tolist(),
            "counts": [int(c) for c in self.counts],
            "slope": self.slope,
            "intercept": self.intercept,
            "max_residual": self.max_residual,
            "bound_tag": self.bound_tag,
            "bound_value": self.bound_value,
        }


def estimate_box_dimension(f: SampledFunction, k_min: int = 4, k_max: int = 10,
                           bound_tag: str = NONE, bound_value=None) -> DimensionEstimate:
    """Least-squares slope of ``log N_delta`` against ``log(1/delta)``.

    ``f`` must live on [0, 1] with abscissa spacing at most ``2**-(k_max+2)``.
    """
    if k_max - k_min < 4:
        raise ValueError("need k_max - k_min >= 4")
    spacing = float(np.max(np.diff(f.abscissae)))
    if spacing > 2.0 ** -(k_max + 2):
        raise Undersampled(
            f"abscissa spacing {spacing:.3g} exceeds 2**-{k_max + 2}; sample more densely",
            spacing=spacing,
        )
    ks = np.arange(k_min, k_max + 1)
    counts = np.array([box_count_graph(f, 2.0 ** -k) for k in ks], dtype=np.int64)
    xs = ks * math.log(2.0)
    ys = np.log(counts.astype(float))
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    return DimensionEstimate(ks, counts, float(slope), float(intercept),
                             float(np.max(np.abs(resid))), bound_tag, bound_value)


@dataclass
class DimensionReport:
    estimate: DimensionEstimate
    conditions: object
    passed: bool
    status: str
    construction: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "estimate": self.estimate.to_dict(),
            "conditions": self.conditions.to_dict(),
            "pass": self.passed,
            "status": self.status,
            "construction": self.construction,
        }


def _claim(space, theta):
    if space == "bv":
        return EQ_ONE, 1.0
    if space == "convex":
        if theta.kind == "power":
            return LEQ_TWO_MINUS_EPS, 2.0 - theta.eps
        if theta.kind == "slog":
            return EQ_ONE, 1.0
    return NONE, None


def respects_claim(slope, tag, value, tolerance=CLAIM_TOLERANCE):
    if tag == EQ_ONE:
        return abs(slope - 1.0) <= tolerance
    if tag == LEQ_TWO_MINUS_EPS:
        return slope <= value + tolerance
    return True


def sample_fractal(spec: FractalSpec, spacing: float, tol: float = 1e-12):
    """``f_b^alpha`` sampled with gaps at most ``spacing``.

    Uses the backward trajectory on a refinement grid when it stays under
    :data:`GRID_POINT_LIMIT` points, otherwise the series on a uniform grid.
    """
    p = spec.partition
    depth = depth_for_spacing(p, spacing)
    if p.n_intervals ** (depth + 1) + 1 <= GRID_POINT_LIMIT:
        grid = RefinementGrid.build(p, depth)
        report = backward_trajectory(None, spec, grid=grid, tol=tol)
        return report.function, {"method": "trajectory", "depth": depth, "points": len(grid),
                                 "levels": report.levels}
    n = int(math.ceil(p.length / spacing))
    xs = np.linspace(p.x0, p.xN, n + 1)
    values = evaluate_series_many(xs, spec, tol)
    return SampledFunction(xs, values), {"method": "series", "points": n + 1}


def dimension_report(spec: FractalSpec, space: str = "bv", k_range=(4, 10),
                     theta: Optional[ThetaFunction] = None, y_samples=None,
                     tol: float = 1e-12) -> DimensionReport:
    """Check the parameter conditions of ``space`` and estimate the dimension
    of the resulting fractal function.

    ``status`` is ``CONDITIONS_FAILED`` when the hypotheses do not hold; the
    estimate is still produced but the claim is not asserted.
    """
    space = space.lower()
    if space == "bv":
        conditions = check_bv_conditions(spec.scaling)
    elif space == "vbeta":
        conditions = check_vbeta_conditions(spec.scaling)
    elif space == "convex":
        if theta is None:
            raise ValueError("convex space needs a theta function")
        conditions = check_convex_conditions(spec.scaling, spec.partition.maps, theta, y_samples)
    else:
        raise ValueError(f"unknown space {space!r}")
    k_min, k_max = k_range
    # slightly finer than required so rounding cannot trip the sampling check
    spacing = 2.0 ** -(k_max + 2) * spec.partition.length * (1 - 1e-9)
    fractal, construction = sample_fractal(spec, spacing, tol)
    tag, value = _claim(space, theta)
    estimate = estimate_box_dimension(fractal.rescaled_to_unit(), k_min, k_max, tag, value)
    if not conditions.passed:
        return DimensionReport(estimate, conditions, False, "CONDITIONS_FAILED", construction)
    ok = respects_claim(estimate.slope, tag, value)
    return DimensionReport(estimate, conditions, ok, "PASS" if ok else "BOUND_VIOLATED",
                           construction)
