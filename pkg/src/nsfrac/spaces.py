"""Norms, oscillation sums and parameter-condition checks for BV, V_beta and
convex Lipschitz spaces.

Quantities defined as a supremum over a continuum (the V_beta supremum over
delta, the convex Lipschitz seminorm) are evaluated as maxima over a finite
grid and are therefore lower bounds of the true value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import qmc

from .core import AffineMapFamily, SampledFunction, ScalingScheme
from .engine import FractalSpec, GridOperators
from .errors import BetaOutOfRange, DomainNotUnit, NonconstantScaling, OutOfDomain


def total_variation(f: SampledFunction) -> float:
    """Exact variation of the piecewise-linear interpretation."""
    return math.fsum(np.abs(np.diff(f.values)))


def bv_norm(f: SampledFunction) -> float:
    return abs(float(f.values[0])) + total_variation(f)


# ---------------------------------------------------------------------------
# oscillation calculus on [0, 1]


def require_unit_domain(f: SampledFunction):
    if f.domain != (0.0, 1.0):
        raise DomainNotUnit(
            f"function lives on [{f.domain[0]}, {f.domain[1]}]; rescale to [0, 1] first"
        )


def cell_oscillations(f: SampledFunction, k: int) -> np.ndarray:
    """``R_f(S)`` for the ``2**k`` cells ``[n delta, (n+1) delta]``, ``delta = 2**-k``.

    Exact for piecewise-linear ``f``: the extremes on a cell are attained at
    breakpoints inside it or at the cell ends.
    """
    require_unit_domain(f)
    n = 2 ** int(k)
    edges = np.arange(n + 1, dtype=float) / n
    x = np.union1d(f.abscissae, edges)
    y = f(x)
    idx = np.searchsorted(x, edges)
    hi = np.maximum(np.maximum.reduceat(y, idx[:-1]), y[idx[1:]])
    lo = np.minimum(np.minimum.reduceat(y, idx[:-1]), y[idx[1:]])
    return hi - lo


def oscillation_sum(f: SampledFunction, k: int) -> float:
    """``R(delta, f)`` for ``delta = 2**-k``."""
    return math.fsum(cell_oscillations(f, k))


def product_carrier(f: SampledFunction, g: SampledFunction, k_max: int) -> SampledFunction:
    """Samples of the true product ``f g`` on which oscillations over the
    ``2**-k`` cells (``k <= k_max``) are exact.

    ``f g`` is quadratic between joint breakpoints; adding the cell edges and
    each piece's vertex leaves it monotone between consecutive samples.
    """
    require_unit_domain(f)
    require_unit_domain(g)
    edges = np.arange(2 ** int(k_max) + 1, dtype=float) / 2 ** int(k_max)
    x = np.union1d(np.union1d(f.abscissae, g.abscissae), edges)
    fx, gx = f(x), g(x)
    # on [x_j, x_{j+1}]: f = f_j + s t, g = g_j + r t, product' = 0 at t* = -(f_j r + g_j s) / (2 s r)
    h = np.diff(x)
    s, r = np.diff(fx) / h, np.diff(gx) / h
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -(fx[:-1] * r + gx[:-1] * s) / (2 * s * r)
    inside = np.isfinite(t) & (t > 0) & (t < h)
    x = np.union1d(x, x[:-1][inside] + t[inside])
    return SampledFunction(x, f(x) * g(x))


@dataclass
class OscillationProfile:
    ks: np.ndarray
    deltas: np.ndarray
    sums: np.ndarray

    def to_dict(self):
        return {"k": self.ks.tolist(), "delta": self.deltas.tolist(), "R": self.sums.tolist()}


def oscillation_profile(f: SampledFunction, k_min: int, k_max: int) -> OscillationProfile:
    if k_min >= k_max:
        raise ValueError("k_min must be smaller than k_max")
    require_unit_domain(f)
    ks = np.arange(k_min, k_max + 1)
    sums = np.array([oscillation_sum(f, k) for k in ks])
    return OscillationProfile(ks, 2.0 ** -ks.astype(float), sums)


def v_beta_norm(f: SampledFunction, beta: float, k_range=(0, 10)) -> float:
    """``||f||_inf + max_k R(2**-k, f) / (2**-k)**(1 - beta)`` over ``k_range``.

    The maximum over a dyadic grid bounds the true supremum from below.
    """
    if not 1.0 <= beta <= 2.0:
        raise BetaOutOfRange(f"beta={beta!r} must lie in [1, 2]")
    require_unit_domain(f)
    k_lo, k_hi = k_range
    best = 0.0
    for k in range(int(k_lo), int(k_hi) + 1):
        delta = 2.0 ** -k
        best = max(best, oscillation_sum(f, k) / delta ** (1.0 - beta))
    return f.sup_norm() + best


# ---------------------------------------------------------------------------
# parameter conditions


@dataclass
class ConditionReport:
    """Per-level, per-interval quantities compared with a strict threshold.

    ``quantities[m-1, i-1]`` belongs to level m and interval i; ``worst`` is
    the 1-based ``(i, m)`` of the largest entry.
    """

    space: str
    quantities: np.ndarray
    threshold: float
    passed: bool
    worst: tuple
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_quantities(cls, space, quantities, threshold, **extra):
        q = np.asarray(quantities, dtype=float)
        m, i = np.unravel_index(int(np.argmax(q)), q.shape)
        return cls(space, q, float(threshold), bool(np.all(q < threshold)),
                   (int(i) + 1, int(m) + 1), extra)

    @property
    def worst_value(self):
        i, m = self.worst
        return float(self.quantities[m - 1, i - 1])

    def to_dict(self):
        return {
            "space": self.space,
            "quantities": self.quantities.tolist(),
            "threshold": self.threshold,
            "pass": self.passed,
            "worst": {"interval": self.worst[0], "level": self.worst[1],
                      "value": self.worst_value},
            **self.extra,
        }


def _levels_to_check(scaling, levels):
    # explicit levels plus one tail level cover every distinct sup
    return scaling.n_explicit + 1 if levels is None else int(levels)


def check_bv_conditions(scaling: ScalingScheme, N: Optional[int] = None,
                        levels: Optional[int] = None) -> ConditionReport:
    """Every ``||alpha_{i,m}||_BV = |alpha(x_0)| + V(alpha)`` must be below ``1/(2N)``."""
    N = scaling.n_intervals if N is None else int(N)
    x0, xN = scaling.domain
    rows = []
    for m in range(1, _levels_to_check(scaling, levels) + 1):
        p, q = scaling.coefficients(m)
        rows.append(np.abs(p + q * x0) + np.abs(q) * (xN - x0))
    return ConditionReport.from_quantities("BV", rows, 1.0 / (2 * N))


def _require_constant(scaling):
    if not scaling.is_constant:
        raise NonconstantScaling("this space requires constant scaling factors")


def check_vbeta_conditions(scaling: ScalingScheme, levels: Optional[int] = None) -> ConditionReport:
    """Constant scaling factors with ``|alpha_{i,m}| < 1``."""
    _require_constant(scaling)
    rows = [np.abs(scaling.coefficients(m)[0])
            for m in range(1, _levels_to_check(scaling, levels) + 1)]
    return ConditionReport.from_quantities("VBETA", rows, 1.0)


# ---------------------------------------------------------------------------
# convex Lipschitz spaces


@dataclass(frozen=True)
class ThetaFunction:
    """Modulus ``theta`` for convex Lipschitz spaces.

    ``power``: ``s**eps`` with ``0 < eps <= 1``; ``slog``: ``-s ln s`` (positive
    on (0, 1) only); ``custom``: a sampled table.
    """

    kind: str
    eps: Optional[float] = None
    table: Optional[SampledFunction] = None

    @classmethod
    def power(cls, eps):
        if not 0.0 < eps <= 1.0:
            raise ValueError("power exponent must lie in (0, 1]")
        return cls("power", eps=float(eps))

    @classmethod
    def slog(cls):
        return cls("slog")

    @classmethod
    def custom(cls, s, values):
        return cls("custom", table=SampledFunction(s, values))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "power":
            return s ** self.eps
        if self.kind == "slog":
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(s > 0, -s * np.log(np.where(s > 0, s, 1.0)), 0.0)
        return self.table(s)

    def describe(self):
        if self.kind == "power":
            return {"kind": "power", "eps": self.eps}
        if self.kind == "slog":
            return {"kind": "slog"}
        return {"kind": "custom", "samples": len(self.table)}

    def admissibility(self, s_min=2.0 ** -40, s_max=0.5):
        """Flags for positivity, bounded ``s/theta(s)`` near 0 and regular
        variation ``theta(c s)/theta(s) -> c**gamma``.

        Closed form for ``power`` and ``slog``; sampled checks on
        ``[s_min, s_max]`` for ``custom`` tables.
        """
        if self.kind == "power":
            return {"positive": True, "bounded_ratio": True, "regular_variation": True,
                    "gamma": self.eps}
        if self.kind == "slog":
            return {"positive": True, "bounded_ratio": True, "regular_variation": True,
                    "gamma": 1.0}
        lo = max(s_min, self.table.domain[0])
        s = np.geomspace(max(lo, 1e-300), s_max, 64)
        th = self(s)
        positive = bool(np.all(th > 0))
        bounded = positive and bool(np.max(s / th) < 1e6)
        gamma = None
        regular = False
        if positive and s.size > 8:
            small = s[:8]
            ok = small * 2 <= s[-1]
            if np.any(ok):
                est = np.log(self(2 * small[ok]) / self(small[ok])) / math.log(2.0)
                regular = bool(np.ptp(est) < 1e-2)
                gamma = float(np.mean(est)) if regular else None
        return {"positive": positive, "bounded_ratio": bounded, "regular_variation": regular,
                "gamma": gamma}


def _domain_of(g, domain):
    if isinstance(g, SampledFunction):
        return g.domain
    return (0.0, 1.0) if domain is None else (float(domain[0]), float(domain[1]))


def convex_delta(g, u, v, delta, domain=None):
    """``g(u + delta v) - (delta g(u + v) + (1 - delta) g(u))`` (vectorised)."""
    a, b = _domain_of(g, domain)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    delta = np.asarray(delta, dtype=float)
    tol = 1e-12 * (b - a)
    if np.any(u < a - tol) or np.any(v <= 0) or np.any(u + v > b + tol):
        raise OutOfDomain("need x_0 <= u < u + v <= x_N")
    if np.any(delta < 0) or np.any(delta > 1):
        raise OutOfDomain("delta must lie in [0, 1]")
    w = u + v
    return g(u + delta * v) - (delta * g(w) + (1.0 - delta) * g(u))


def convex_seminorm(g, theta: ThetaFunction, sample_budget: int = 4096, domain=None,
                    max_abscissae: int = 256) -> float:
    """Lower estimate of ``[g]* = sup |Delta(u, v, delta)| / theta(v)``.

    Candidates: an unscrambled Sobol sample of ``(delta, u, v)`` of at least
    ``sample_budget`` points, plus every pair of abscissae ``u < u + v`` with
    ``delta`` in {1/4, 1/2, 3/4}. Abscissae are thinned to ``max_abscissae``
    evenly strided points; plain callables use 65 uniform abscissae.
    """
    if sample_budget < 1000:
        raise ValueError("sample_budget must be at least 1000")
    a, b = _domain_of(g, domain)
    length = b - a

    m = int(math.ceil(math.log2(sample_budget)))
    pts = qmc.Sobol(d=3, scramble=False).random_base2(m)
    delta = pts[:, 0]
    u = a + pts[:, 1] * length
    v = pts[:, 2] * (b - u)
    keep = v > 1e-12 * length
    best = _max_ratio(g, theta, u[keep], v[keep], delta[keep], (a, b))

    if isinstance(g, SampledFunction):
        xs = g.abscissae
        if xs.size > max_abscissae:
            xs = xs[np.unique(np.linspace(0, xs.size - 1, max_abscissae).round().astype(int))]
    else:
        xs = np.linspace(a, b, 65)
    j, k = np.triu_indices(xs.size, 1)
    uu, vv = xs[j], xs[k] - xs[j]
    for d in (0.25, 0.5, 0.75):
        best = max(best, _max_ratio(g, theta, uu, vv, np.full(uu.shape, d), (a, b)))
    return best


def _max_ratio(g, theta, u, v, delta, domain):
    if u.size == 0:
        return 0.0
    d = np.abs(convex_delta(g, u, v, delta, domain))
    th = theta(v)
    ok = th > 0
    if not np.any(ok):
        return 0.0
    return float(np.max(d[ok] / th[ok]))


def default_y_samples(length):
    return length * 2.0 ** -np.arange(0, 21)


def theta_ratios(theta: ThetaFunction, slopes, y_samples=None, length=1.0):
    """``sup_Y theta(Y) / theta(a_i Y)`` per interval; ``a_i**-eps`` for powers."""
    slopes = np.asarray(slopes, dtype=float)
    if theta.kind == "power":
        return slopes ** -theta.eps, True
    ys = default_y_samples(length) if y_samples is None else np.asarray(y_samples, dtype=float)
    if np.any(ys <= 0):
        raise ValueError("Y samples must be positive")
    num = theta(ys)[None, :]
    den = theta(slopes[:, None] * ys[None, :])
    return np.max(num / den, axis=1), False


def check_convex_conditions(scaling: ScalingScheme, maps: AffineMapFamily, theta: ThetaFunction,
                            y_samples=None, levels: Optional[int] = None) -> ConditionReport:
    """``S_m = max_i max(|alpha_{i,m}|, |alpha_{i,m}| theta(Y)/theta(a_i Y)) < 1``.

    The ratio is a supremum over the Y samples (default ``2**-j |I|``,
    ``j = 0..20``) unless ``theta`` is a power, where it is ``a_i**-eps``.
    """
    _require_constant(scaling)
    length = maps.domain[1] - maps.domain[0]
    ratios, closed = theta_ratios(theta, maps.slopes, y_samples, length)
    rows = []
    for m in range(1, _levels_to_check(scaling, levels) + 1):
        c = np.abs(scaling.coefficients(m)[0])
        rows.append(np.maximum(c, c * ratios))
    return ConditionReport.from_quantities(
        "CONVEX_LIP", rows, 1.0,
        theta=theta.describe(), theta_ratios=ratios.tolist(), closed_form=closed,
    )


# ---------------------------------------------------------------------------
# measured contraction of the RB operators


def rb_contraction(spec: FractalSpec, grid, m: int, g, h, norm="bv"):
    """``(||T g - T h||, ||g - h||)`` in the BV or sup norm on the grid."""
    ops = GridOperators(spec, grid)
    gv, hv = grid.sample(g), grid.sample(h)
    ops.check_endpoints(gv)
    ops.check_endpoints(hv)
    diff_out = SampledFunction(grid.points, ops.apply(gv, m) - ops.apply(hv, m))
    diff_in = SampledFunction(grid.points, gv - hv)
    if norm == "bv":
        return bv_norm(diff_out), bv_norm(diff_in)
    if norm == "sup":
        return diff_out.sup_norm(), diff_in.sup_norm()
    raise ValueError(f"unknown norm {norm!r}")


def bv_contraction_factor(scaling: ScalingScheme, m: int) -> float:
    """``2N max_i ||alpha_{i,m}||_BV``."""
    report = check_bv_conditions(scaling, levels=m)
    return 2 * scaling.n_intervals * float(np.max(report.quantities[m - 1]))
