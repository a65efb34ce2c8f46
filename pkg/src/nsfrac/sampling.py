"""Built-in germ functions and seeded random generators for specs and test inputs."""
from __future__ import annotations

import numpy as np

from .core import BaseOperator, BaseScheme, Partition, SampledFunction, ScalingScheme
from .engine import FractalSpec

GERM_SAMPLES = 1025
TABLE_SAMPLES = 257


def _unit(x, domain):
    a, b = domain
    return (np.asarray(x, dtype=float) - a) / (b - a)


def builtin_germ(name: str, domain=(0.0, 1.0)) -> SampledFunction:
    """Named germs: ``line`` (the identity), ``parabola-bump`` (``4t(1-t)``)
    and ``sine-like`` (a sampled table of ``sin 2 pi t + 0.25 sin 6 pi t``)."""
    a, b = map(float, domain)
    if name == "line":
        xs = np.array([a, b])
        return SampledFunction(xs, xs.copy())
    if name == "parabola-bump":
        xs = np.linspace(a, b, GERM_SAMPLES)
        t = _unit(xs, domain)
        return SampledFunction(xs, 4.0 * t * (1.0 - t))
    if name == "sine-like":
        xs = np.linspace(a, b, TABLE_SAMPLES)
        t = _unit(xs, domain)
        return SampledFunction(xs, np.sin(2 * np.pi * t) + 0.25 * np.sin(6 * np.pi * t))
    raise ValueError(f"unknown built-in germ {name!r}")


BUILTIN_GERMS = ("line", "parabola-bump", "sine-like")


def random_pl(rng: np.random.Generator, n_breaks: int = 16, domain=(0.0, 1.0),
              scale: float = 1.0) -> SampledFunction:
    """Random piecewise-linear function with ``n_breaks`` interior breakpoints."""
    a, b = domain
    inner = np.sort(rng.uniform(a, b, n_breaks))
    xs = np.unique(np.concatenate([[a], inner, [b]]))
    return SampledFunction(xs, scale * rng.normal(size=xs.size))


def random_dyadic_pl(rng: np.random.Generator, k: int = 8, n_breaks: int = 12) -> SampledFunction:
    """Random piecewise-linear function on [0, 1] with breakpoints on the
    ``2**-k`` mesh and dyadic values, so every derived quantity is exact."""
    inner = rng.choice(np.arange(1, 2 ** k), size=n_breaks, replace=False)
    xs = np.concatenate([[0], np.sort(inner), [2 ** k]]) / 2.0 ** k
    ys = rng.integers(-2 ** 10, 2 ** 10, size=xs.size) / 2.0 ** 8
    return SampledFunction(xs, ys)


def random_operators(rng: np.random.Generator, count: int):
    ops = []
    for _ in range(count):
        kind = rng.choice(BaseOperator.KINDS)
        t = float(np.round(rng.uniform(0.1, 0.9), 3)) if kind == "blend" else 0.0
        ops.append(BaseOperator(str(kind), t))
    return ops


def random_spec(rng: np.random.Generator, n_intervals=None, alpha_max: float = 0.7,
                n_levels: int = 3, affine: bool = True, decreasing: bool = False,
                germ=None) -> FractalSpec:
    """Random non-stationary spec on [0, 1].

    With ``decreasing=True`` every ``|alpha_{i,m}|`` is non-increasing in
    ``m`` and the base is a single operator, the setting in which successive
    trajectory distances contract by ``||alpha||`` at every step.
    """
    N = int(rng.choice([2, 3, 4, 6])) if n_intervals is None else int(n_intervals)
    inner = np.sort(rng.uniform(0.05, 0.95, N - 1))
    knots = np.concatenate([[0.0], inner, [1.0]])
    # keep intervals from degenerating
    knots = 0.5 * knots + 0.5 * np.linspace(0.0, 1.0, N + 1)
    first = []
    for _ in range(N):
        if affine:
            # |p| + |q| <= alpha_max keeps |p + q x| <= alpha_max on [0, 1]
            w = rng.uniform(0.0, 1.0)
            first.append((rng.uniform(-1, 1) * w * alpha_max,
                          rng.uniform(-1, 1) * (1 - w) * alpha_max))
        else:
            first.append((rng.uniform(-alpha_max, alpha_max), 0.0))
    levels = [first]
    for _ in range(n_levels - 1):
        if decreasing:
            c = rng.uniform(0.5, 1.0)
            levels.append([(c * p, c * q) for p, q in levels[-1]])
        else:
            levels.append([(rng.uniform(-1, 1) * abs(p), rng.uniform(-1, 1) * abs(q))
                           for p, q in first])
    scaling = ScalingScheme(levels)
    f = germ if germ is not None else random_pl(rng, 24)
    n_ops = 1 if decreasing else int(rng.integers(1, 4))
    base = BaseScheme(random_operators(rng, n_ops))
    return FractalSpec(f, Partition(knots), scaling, base, require_distinct_base=False)

