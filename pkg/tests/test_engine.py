import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsfrac.core import BaseOperator, RefinementGrid, SampledFunction
from nsfrac.engine import (
    apply_rb,
    backward_trajectory,
    evaluate_series,
    evaluate_series_many,
    functional_equation_residual,
    make_spec,
    series_terms,
    stationary_fixed_point,
    truncation_level,
)
from nsfrac.errors import EndpointMismatch, NoConvergence, OutOfDomain
from nsfrac.sampling import builtin_germ, random_spec


def bump_spec(alpha=0.3, N=2, base=("chord",), **kw):
    germ = builtin_germ("sine-like")
    levels = [[alpha] * N]
    return make_spec(germ, np.linspace(0, 1, N + 1), levels, [BaseOperator(b) for b in base], **kw)


def test_apply_rb_zero_scaling_returns_germ():
    spec = bump_spec(alpha=0.0)
    grid = RefinementGrid.build(spec.partition, 4)
    g = SampledFunction(grid.points, grid.sample(spec.germ) + np.sin(np.pi * grid.points) ** 2)
    out = apply_rb(g, 1, spec, grid)
    np.testing.assert_array_equal(out.values, grid.sample(spec.germ))


def test_apply_rb_on_base_returns_germ():
    spec = bump_spec(alpha=0.45)
    grid = RefinementGrid.build(spec.partition, 4)
    b = spec.base.function(1, spec.germ, spec.partition)
    out = apply_rb(b, 1, spec, grid)
    np.testing.assert_allclose(out.values, grid.sample(spec.germ), atol=1e-15)


def test_apply_rb_hand_value():
    line = SampledFunction([0, 1], [0, 1])
    spec = make_spec(line, [0, 0.5, 1], [[0.3, 0.3]], [BaseOperator("chord")],
                     require_distinct_base=False)
    grid = RefinementGrid.build(spec.partition, 2)
    g = SampledFunction(grid.points, grid.points + grid.points * (1 - grid.points))
    out = apply_rb(g, 1, spec, grid)
    # f(0.25) + 0.3 (g - b)(0.5) = 0.25 + 0.3 * 0.25
    assert out(0.25) == pytest.approx(0.325, abs=1e-15)


def test_apply_rb_rejects_wrong_endpoints():
    spec = bump_spec()
    grid = RefinementGrid.build(spec.partition, 3)
    with pytest.raises(EndpointMismatch):
        apply_rb(SampledFunction(grid.points, np.ones(len(grid))), 1, spec, grid)


def test_zero_scaling_converges_immediately():
    spec = bump_spec(alpha=0.0)
    rep = backward_trajectory(None, spec, depth=4, tol=1e-12)
    assert rep.converged and rep.levels == 1
    np.testing.assert_array_equal(rep.function.values, RefinementGrid.build(spec.partition, 4).sample(spec.germ))


def test_constant_half_scaling_ratio():
    spec = bump_spec(alpha=0.5, base=("knot_pl",))
    rep = backward_trajectory(None, spec, depth=6, tol=1e-12)
    d = [x for x in rep.distances if x > rep.noise_floor]
    assert all(b <= 0.52 * a for a, b in zip(d, d[1:]))
    assert rep.ratio <= 0.52


def test_limit_independent_of_start():
    spec = bump_spec(alpha=0.6, N=3, base=("blend",))
    tol = 1e-10
    a = backward_trajectory(None, spec, depth=5, tol=tol).function
    chord = BaseOperator("chord").apply(spec.germ, spec.partition)
    b = backward_trajectory(chord, spec, depth=5, tol=tol).function
    assert np.max(np.abs(a.values - b.values)) <= 2 * tol


def test_no_convergence_reports_log():
    spec = bump_spec(alpha=0.95)
    with pytest.raises(NoConvergence) as info:
        backward_trajectory(None, spec, depth=8, max_levels=5, tol=1e-12)
    rep = info.value.report
    assert not rep.converged and rep.levels == 5 and len(rep.distances) == 5


def test_series_at_endpoints_and_knots():
    spec = bump_spec(alpha=0.4, N=4, base=("knot_pl", "chord"))
    assert evaluate_series(0.0, spec) == spec.germ(0.0)
    assert series_terms(0.0, spec) == []
    for x in spec.partition.knots:
        assert evaluate_series(float(x), spec) == spec.germ(float(x))
    with pytest.raises(OutOfDomain):
        evaluate_series(1.5, spec)


def test_series_matches_grid_and_terminates():
    spec = bump_spec(alpha=0.4, N=3, base=("knot_pl", "chord"))
    depth = 4
    grid = RefinementGrid.build(spec.partition, depth)
    rep = backward_trajectory(None, spec, grid=grid, tol=1e-13)
    vals = evaluate_series_many(grid.points, spec, 1e-12)
    assert np.max(np.abs(vals - rep.function.values)) <= 1e-10
    for x in grid.points[::7]:
        terms = series_terms(float(x), spec)
        assert sum(1 for t in terms if t != 0.0) <= depth


def test_series_workers_are_bit_identical():
    spec = bump_spec(alpha=0.55, N=3, base=("blend", "chord"))
    xs = np.linspace(0, 1, 20001)
    one = evaluate_series_many(xs, spec, 1e-12, workers=1)
    many = evaluate_series_many(xs, spec, 1e-12, workers=4)
    assert one.tobytes() == many.tobytes()


def test_truncation_level_bound():
    spec = bump_spec(alpha=0.5)
    L = truncation_level(spec, 1e-12)
    B = spec.base_deviation()
    assert 0.5 ** (L + 1) / 0.5 * B <= 1e-12 < 0.5 ** L / 0.5 * B


def test_stationary_fixed_point_zero_and_residual():
    spec = bump_spec(alpha=0.0)
    grid = RefinementGrid.build(spec.partition, 4)
    fp = stationary_fixed_point(1, spec, grid=grid)
    np.testing.assert_array_equal(fp.values, grid.sample(spec.germ))

    spec = bump_spec(alpha=0.7, N=3)
    grid = RefinementGrid.build(spec.partition, 5)
    tol = 1e-10
    fp = stationary_fixed_point(1, spec, grid=grid, tol=tol)
    assert functional_equation_residual(fp, 1, spec, grid) <= 2 * tol


def test_constant_scheme_matches_stationary_fixed_point():
    spec = make_spec(builtin_germ("parabola-bump"), [0, 0.3, 0.6, 1],
                     [[0.5, -0.4, (0.2, 0.3)]] * 3, [BaseOperator("chord")])
    grid = RefinementGrid.build(spec.partition, 5)
    tol = 1e-10
    a = backward_trajectory(None, spec, grid=grid, tol=tol).function
    b = stationary_fixed_point(1, spec, grid=grid, tol=tol)
    assert np.max(np.abs(a.values - b.values)) <= 2 * tol


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_knot_interpolation_property(seed):
    spec = random_spec(np.random.default_rng(seed))
    rep = backward_trajectory(None, spec, depth=2, tol=1e-11)
    knots = spec.partition.knots
    err = np.max(np.abs(rep.function(knots) - spec.germ(knots)))
    assert err <= 1e-10 * (1 + spec.germ.sup_norm())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_geometric_decay_property(seed):
    spec = random_spec(np.random.default_rng(seed), decreasing=True, n_levels=4)
    rep = backward_trajectory(None, spec, depth=3, tol=1e-12)
    s = spec.alpha_sup
    d = rep.distances
    for a, b in zip(d, d[1:]):
        if a > rep.noise_floor:
            assert b <= (s + 0.02) * a
