"""The fractal operator ``F: f -> f_b^alpha`` with ``b_m = L_m f``.

All per-input quantities (``||f||``, ``sup_m ||f - L_m f||``, ...) are
measured on the same refinement grid the operator is evaluated on, so every
reported inequality compares like with like.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    DEFAULT_MAX_LEVELS,
    BaseOperator,
    BaseScheme,
    Partition,
    RefinementGrid,
    SampledFunction,
    ScalingScheme,
)
from .engine import FractalSpec, backward_trajectory
from .errors import ContractionConditionViolated, InvalidBase, InvalidScaling

NEUMANN_MAX_TERMS = 200


@dataclass(frozen=True)
class OperatorConfig:
    """Partition, scaling family and base operators ``L_m`` (last one repeated).

    ``c_l`` bounds ``sup_m ||Id - L_m||``; it only gates the preconditions of
    :func:`neumann_inverse` and :func:`bounded_below_report`. Every built-in
    operator has ``||L|| = 1`` and ``||Id - L|| <= 2`` in the sup norm.
    """

    partition: Partition
    scaling: ScalingScheme
    operators: tuple
    c_l: float = 2.0

    def __post_init__(self):
        ops = tuple(self.operators)
        if not ops or not all(isinstance(o, BaseOperator) for o in ops):
            raise InvalidBase("operators must be a non-empty list of BaseOperator")
        object.__setattr__(self, "operators", ops)
        if self.scaling.n_intervals != self.partition.n_intervals:
            raise InvalidScaling("scaling and partition disagree on N")
        if self.c_l < 0:
            raise ValueError("c_l must be non-negative")

    @classmethod
    def create(cls, knots, scaling, operators, c_l=2.0, tail="repeat-last",
               max_levels=DEFAULT_MAX_LEVELS):
        p = knots if isinstance(knots, Partition) else Partition(knots)
        if not isinstance(scaling, ScalingScheme):
            scaling = ScalingScheme(scaling, domain=p.domain, tail=tail, max_levels=max_levels)
        return cls(p, scaling, tuple(_as_operator(o) for o in operators), c_l)

    @property
    def alpha_sup(self):
        return self.scaling.sup_norm

    @property
    def l_norm(self):
        return max(op.norm for op in self.operators)

    def spec_for(self, f: SampledFunction) -> FractalSpec:
        return FractalSpec(f, self.partition, self.scaling, BaseScheme(list(self.operators)),
                           require_distinct_base=False)

    def grid(self, depth):
        return RefinementGrid.build(self.partition, depth)

    def inversion_threshold(self):
        return 1.0 / (1.0 + self.c_l)


def _as_operator(entry):
    if isinstance(entry, BaseOperator):
        return entry
    if isinstance(entry, tuple):
        return BaseOperator(*entry)
    return BaseOperator(entry)


def _as_grid_function(f, grid):
    return SampledFunction(grid.points, grid.sample(f))


def _sup(values):
    return float(np.max(np.abs(values)))


def apply_operator(f, cfg: OperatorConfig, depth: Optional[int] = None, tol: float = 1e-12,
                   grid: Optional[RefinementGrid] = None) -> SampledFunction:
    """``F(f) = f_b^alpha`` on the refinement grid, with ``b_m = L_m f``."""
    grid = grid if grid is not None else cfg.grid(depth)
    fg = _as_grid_function(f, grid)
    return backward_trajectory(None, cfg.spec_for(fg), grid=grid, tol=tol).function


def base_deviation(f, cfg: OperatorConfig, grid: RefinementGrid) -> float:
    """``sup_m ||f - L_m f||`` measured on the grid."""
    fg = _as_grid_function(f, grid)
    return max(_sup(fg.values - op.apply(fg, cfg.partition)(grid.points)) for op in cfg.operators)


@dataclass
class BoundReport:
    measured: float
    bound: float
    bound_cl: float
    slack: float
    passed: bool

    def to_dict(self):
        return {
            "measured": self.measured,
            "bound": self.bound,
            "bound_cl": self.bound_cl,
            "slack": self.slack,
            "pass": self.passed,
        }


def perturbation_report(f, cfg: OperatorConfig, depth: Optional[int] = None, tol: float = 1e-12,
                        grid: Optional[RefinementGrid] = None) -> BoundReport:
    """Compare ``||F(f) - f||`` with ``s/(1-s) sup_m ||f - L_m f||`` and ``s/(1-s) C_L ||f||``."""
    grid = grid if grid is not None else cfg.grid(depth)
    fg = _as_grid_function(f, grid)
    Ff = apply_operator(fg, cfg, grid=grid, tol=tol)
    s = cfg.alpha_sup
    factor = s / (1.0 - s)
    measured = _sup(Ff.values - fg.values)
    bound = factor * base_deviation(fg, cfg, grid)
    bound_cl = factor * cfg.c_l * _sup(fg.values)
    passed = measured <= bound + 1e-9 and measured <= bound_cl + 1e-9
    return BoundReport(measured, bound, bound_cl, bound - measured, passed)


def check_linearity(f, g, c: float, d: float, cfg: OperatorConfig, depth: Optional[int] = None,
                    tol: float = 1e-12, grid: Optional[RefinementGrid] = None) -> float:
    """``sup |F(c f + d g) - c F(f) - d F(g)|`` over the grid."""
    grid = grid if grid is not None else cfg.grid(depth)
    fv = grid.sample(f)
    gv = grid.sample(g)
    combo = SampledFunction(grid.points, c * fv + d * gv)
    lhs = apply_operator(combo, cfg, grid=grid, tol=tol).values
    Ff = apply_operator(SampledFunction(grid.points, fv), cfg, grid=grid, tol=tol).values
    Fg = apply_operator(SampledFunction(grid.points, gv), cfg, grid=grid, tol=tol).values
    return _sup(lhs - c * Ff - d * Fg)


def _require_invertible(cfg):
    s = cfg.alpha_sup
    if not s < cfg.inversion_threshold():
        raise ContractionConditionViolated(
            f"sup-norm of alpha is {s:g}, needs to be below 1/(1+C_L) = {cfg.inversion_threshold():g}",
            alpha_sup=s,
            c_l=cfg.c_l,
        )


def neumann_inverse(h, cfg: OperatorConfig, depth: Optional[int] = None, tol: float = 1e-12,
                    grid: Optional[RefinementGrid] = None, return_terms: bool = False):
    """Solve ``F(g) = h`` by ``g = sum_n (Id - F)^n h``.

    Terms are added until one has sup-norm at most ``tol`` (cap of
    :data:`NEUMANN_MAX_TERMS`). The residual ``F(g) - h`` equals minus the
    first omitted term.
    """
    _require_invertible(cfg)
    grid = grid if grid is not None else cfg.grid(depth)
    term = grid.sample(h).copy()
    total = np.zeros_like(term)
    # the trajectory tolerance is kept well below the truncation tolerance
    inner_tol = tol * 1e-3
    n = 0
    while True:
        total += term
        n += 1
        F_term = apply_operator(SampledFunction(grid.points, term), cfg, grid=grid,
                                tol=inner_tol).values
        term = term - F_term
        if _sup(term) <= tol or n >= NEUMANN_MAX_TERMS:
            break
    result = SampledFunction(grid.points, total)
    return (result, n) if return_terms else result


@dataclass
class BoundedBelowReport:
    ratio: float
    floor: float
    sharp_floor: float
    passed: bool

    def to_dict(self):
        return {"ratio": self.ratio, "floor": self.floor, "sharp_floor": self.sharp_floor,
                "pass": self.passed}


def bounded_below_report(f, cfg: OperatorConfig, depth: Optional[int] = None, tol: float = 1e-12,
                         grid: Optional[RefinementGrid] = None) -> BoundedBelowReport:
    """``||F f|| / ||f||`` against ``(1 - s(1 + C_L)) / (1 - s)``.

    ``sharp_floor`` replaces ``C_L ||f||`` by the measured
    ``sup_m ||f - L_m f||``; ``passed`` tests the ratio against it.
    """
    _require_invertible(cfg)
    grid = grid if grid is not None else cfg.grid(depth)
    fg = _as_grid_function(f, grid)
    norm_f = _sup(fg.values)
    if norm_f == 0.0:
        raise ValueError("f must not vanish on the grid")
    s = cfg.alpha_sup
    Ff = apply_operator(fg, cfg, grid=grid, tol=tol)
    ratio = _sup(Ff.values) / norm_f
    floor = (1.0 - s * (1.0 + cfg.c_l)) / (1.0 - s)
    sharp = 1.0 - s / (1.0 - s) * base_deviation(fg, cfg, grid) / norm_f
    return BoundedBelowReport(ratio, floor, sharp, ratio >= sharp - 1e-9)


def operator_norm_bound(f, cfg: OperatorConfig, grid: RefinementGrid) -> float:
    """Upper bound ``1 + s/(1-s) sup_m ||f - L_m f|| / ||f||`` for ``||F f|| / ||f||``."""
    fg = _as_grid_function(f, grid)
    s = cfg.alpha_sup
    return 1.0 + s / (1.0 - s) * base_deviation(fg, cfg, grid) / _sup(fg.values)


def measured_l_norm(f, cfg: OperatorConfig, grid: RefinementGrid) -> float:
    """``max_m ||L_m f|| / ||f||`` on the grid (a lower estimate of ``||L||``)."""
    fg = _as_grid_function(f, grid)
    norm_f = _sup(fg.values)
    return max(_sup(op.apply(fg, cfg.partition)(grid.points)) for op in cfg.operators) / norm_f


def stationary_norm_bound(alpha_sup: float, l_norm: float, f_norm: float) -> float:
    """``(1 + s ||L||) / (1 - s) * ||f||``, the bound for stationary schemes."""
    return (1.0 + alpha_sup * l_norm) / (1.0 - alpha_sup) * f_norm
