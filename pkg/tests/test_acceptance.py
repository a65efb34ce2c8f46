"""Acceptance criteria, one test per criterion.

Each test records its outcome through the ``acceptance`` fixture; the
terminal summary prints one PASS/FAIL line per criterion.
"""
import json
import math
import subprocess
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from nsfrac.core import BaseOperator, BaseScheme, Partition, RefinementGrid, SampledFunction, ScalingScheme
from nsfrac.core import depth_for_spacing, refinement_points
from nsfrac.dimension import dimension_report, sandwich
from nsfrac.engine import (
    FractalSpec,
    backward_trajectory,
    evaluate_series_many,
    make_spec,
    stationary_fixed_point,
)
from nsfrac.fractal_operator import (
    OperatorConfig,
    apply_operator,
    bounded_below_report,
    check_linearity,
    measured_l_norm,
    neumann_inverse,
    perturbation_report,
    stationary_norm_bound,
)
from nsfrac.sampling import builtin_germ, random_dyadic_pl, random_operators, random_pl, random_spec
from nsfrac.set_ifs import (
    ContractionMap2D,
    IfsLevel,
    backward_trajectory_sets,
    hausdorff_distance,
    invariant_ball_radius,
)
from nsfrac.spaces import (
    ThetaFunction,
    bv_contraction_factor,
    bv_norm,
    check_bv_conditions,
    convex_seminorm,
    oscillation_sum,
    product_carrier,
    rb_contraction,
)

ROOT = Path(__file__).resolve().parents[1]


def _grid_depth(N, max_points=2 ** 14):
    d = 0
    while N ** (d + 2) + 1 <= max_points:
        d += 1
    return d


def test_ac01_knot_interpolation(acceptance):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(10):
        spec = random_spec(rng, alpha_max=0.7, n_levels=3)
        knots = spec.partition.knots
        scale = 1 + spec.germ.sup_norm()
        grid = RefinementGrid.build(spec.partition, 3)
        traj = backward_trajectory(None, spec, grid=grid, tol=1e-12).function
        series = evaluate_series_many(knots, spec, 1e-12)
        err = max(np.max(np.abs(traj(knots) - spec.germ(knots))),
                  np.max(np.abs(series - spec.germ(knots))))
        worst = max(worst, err / scale)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 5.0
    acceptance(1, "knot interpolation", ok, f"max rel err {worst:.2e}, {elapsed:.2f}s")
    assert ok


def test_ac02_perturbation_bound(acceptance):
    rng = np.random.default_rng(202)
    worst_slack = math.inf
    passed = True
    for _ in range(10):
        N = int(rng.choice([2, 3, 4, 6]))
        knots = np.sort(np.concatenate([[0, 1], rng.uniform(0.05, 0.95, N - 1)]))
        knots = 0.5 * knots + 0.5 * np.linspace(0, 1, N + 1)
        levels = [list(rng.uniform(-0.7, 0.7, N)) for _ in range(3)]
        cfg = OperatorConfig.create(knots, levels, random_operators(rng, 3))
        grid = cfg.grid(depth_for_spacing(cfg.partition, 2.0 ** -12))
        assert len(grid) >= 2 ** 12
        rep = perturbation_report(random_pl(rng, 20), cfg, grid=grid, tol=1e-13)
        passed &= rep.measured <= rep.bound + 1e-9
        worst_slack = min(worst_slack, rep.bound - rep.measured)
    acceptance(2, "perturbation bound", passed, f"min slack {worst_slack:.3e}")
    assert passed


def test_ac03_geometric_convergence(acceptance):
    rng = np.random.default_rng(303)
    tol = 1e-10
    worst_ratio = 0.0
    worst_gap = 0.0
    passed = True
    for _ in range(10):
        # alpha non-increasing in m and a fixed base: the class with stepwise contraction
        spec = random_spec(rng, alpha_max=0.7, n_levels=4, decreasing=True)
        grid = RefinementGrid.build(spec.partition, _grid_depth(spec.partition.n_intervals))
        s = spec.alpha_sup
        rep = backward_trajectory(None, spec, grid=grid, tol=tol)
        d = rep.distances
        for a, b in zip(d, d[1:]):
            if a > rep.noise_floor:
                passed &= b <= (s + 0.02) * a
                worst_ratio = max(worst_ratio, b / a - s)
        other = BaseOperator("chord").apply(spec.germ, spec.partition)
        if np.allclose(grid.sample(other), grid.sample(spec.germ)):
            other = BaseOperator("knot_pl").apply(spec.germ, spec.partition)
        rep2 = backward_trajectory(other, spec, grid=grid, tol=tol)
        gap = float(np.max(np.abs(rep.function.values - rep2.function.values)))
        worst_gap = max(worst_gap, gap)
        passed &= gap <= 2 * tol
    acceptance(3, "geometric convergence", passed,
               f"max (ratio - |alpha|) {worst_ratio:+.3f}, init gap {worst_gap:.1e}")
    assert passed


def test_ac04_series_matches_iteration(acceptance):
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(5):
        spec = random_spec(rng, n_intervals=int(rng.choice([2, 3, 4])), alpha_max=0.7)
        grid = RefinementGrid.build(spec.partition, 6)
        np.testing.assert_array_equal(grid.points, refinement_points(spec.partition, 6))
        traj = backward_trajectory(None, spec, grid=grid, tol=1e-13).function
        series = evaluate_series_many(grid.points, spec, 1e-12)
        worst = max(worst, float(np.max(np.abs(series - traj.values))))
    ok = worst <= 1e-9
    acceptance(4, "series/iteration equivalence", ok, f"max diff {worst:.2e}")
    assert ok


def test_ac05_stationary_degeneration(acceptance):
    rng = np.random.default_rng(505)
    tol = 1e-10
    passed = True
    worst_gap, worst_norm = 0.0, 0.0
    for _ in range(5):
        N = int(rng.choice([2, 3, 4]))
        alpha = list(rng.uniform(-0.7, 0.7, N))
        op = random_operators(rng, 1)[0]
        f = random_pl(rng, 16)
        # several explicit levels, all equal: the non-stationary machinery on a constant scheme
        spec = FractalSpec(f, Partition(np.linspace(0, 1, N + 1)), ScalingScheme([alpha] * 4),
                           BaseScheme([op] * 4), require_distinct_base=False)
        grid = RefinementGrid.build(spec.partition, _grid_depth(N))
        limit = backward_trajectory(None, spec, grid=grid, tol=tol).function
        fixed = stationary_fixed_point(1, spec, grid=grid, tol=tol)
        gap = float(np.max(np.abs(limit.values - fixed.values)))
        cfg = OperatorConfig.create(spec.partition, [alpha], [op])
        f_norm = float(np.max(np.abs(grid.sample(f))))
        bound = stationary_norm_bound(spec.alpha_sup, measured_l_norm(f, cfg, grid), f_norm)
        passed &= gap <= 2 * tol and limit.sup_norm() <= bound
        worst_gap = max(worst_gap, gap)
        worst_norm = max(worst_norm, limit.sup_norm() / bound)
    acceptance(5, "stationary degeneration", passed,
               f"max gap {worst_gap:.1e}, max norm/bound {worst_norm:.3f}")
    assert passed


def test_ac06_identity_at_zero(acceptance):
    rng = np.random.default_rng(606)
    worst = 0.0
    for N in (2, 3, 4, 6):
        cfg = OperatorConfig.create(np.linspace(0, 1, N + 1), [[0.0] * N], random_operators(rng, 2))
        grid = cfg.grid(_grid_depth(N))
        f = random_pl(rng, 20)
        fv = grid.sample(f)
        out = apply_operator(f, cfg, grid=grid)
        worst = max(worst, float(np.max(np.abs(out.values - fv))) / (1 + np.max(np.abs(fv))))
    ok = worst <= 1e-12
    acceptance(6, "identity at alpha = 0", ok, f"max rel dev {worst:.1e}")
    assert ok


def test_ac07_operator_laws(acceptance):
    rng = np.random.default_rng(707)
    tol = 1e-10
    cfg = OperatorConfig.create([0, 0.3, 0.65, 1], [[0.25, -0.2, (0.1, 0.15)], [0.2, 0.3, -0.1]],
                                ["chord", ("blend", 0.4)])
    assert cfg.alpha_sup < cfg.inversion_threshold()
    grid = cfg.grid(6)
    lin, below_ok, resid = 0.0, True, 0.0
    for _ in range(5):
        f, g = random_pl(rng), random_pl(rng)
        c, d = rng.uniform(-3, 3, 2)
        lin = max(lin, check_linearity(f, g, c, d, cfg, grid=grid, tol=tol * 1e-2))
        below_ok &= bounded_below_report(f, cfg, grid=grid, tol=tol * 1e-2).passed
        h = apply_operator(f, cfg, grid=grid, tol=tol * 1e-3)
        inv = neumann_inverse(h, cfg, grid=grid, tol=tol)
        Finv = apply_operator(inv, cfg, grid=grid, tol=tol * 1e-3)
        resid = max(resid, float(np.max(np.abs(Finv.values - h.values))))
    fixed_cfg = OperatorConfig.create([0, 0.3, 0.65, 1], [[0.6, -0.5, 0.55]], ["knot_pl"])
    fixed_dev = 0.0
    for _ in range(5):
        f = SampledFunction(fixed_cfg.partition.knots, rng.normal(size=4))
        fv = grid.sample(f)
        out = apply_operator(f, fixed_cfg, grid=grid)
        fixed_dev = max(fixed_dev, float(np.max(np.abs(out.values - fv))) / (1 + np.max(np.abs(fv))))
    ok = lin <= 10 * tol and below_ok and resid <= 10 * tol and fixed_dev <= 1e-10
    acceptance(7, "operator laws", ok,
               f"linearity {lin:.1e}, floor {'ok' if below_ok else 'violated'}, "
               f"neumann {resid:.1e}, fixed {fixed_dev:.1e}")
    assert ok


def test_ac08_bv_contraction(acceptance):
    rng = np.random.default_rng(808)
    spec = make_spec(builtin_germ("sine-like"), [0, 0.2, 0.45, 0.7, 1],
                     [[(0.04, 0.05), -0.1, (0.06, -0.05), 0.11], [0.12, -0.12, 0.05, (0.0, 0.1)]],
                     [BaseOperator("blend", 0.3), BaseOperator("knot_pl")])
    assert check_bv_conditions(spec.scaling).passed
    grid = RefinementGrid.build(spec.partition, 4)
    f = grid.sample(spec.germ)
    worst = 0.0
    passed = True
    for k in range(20):
        m = 1 + k % 3
        pair = []
        for _ in range(2):
            r = random_pl(rng, 12)(grid.points)
            r -= np.interp(grid.points, [0, 1], [r[0], r[-1]])
            pair.append(SampledFunction(grid.points, f + r))
        out, inp = rb_contraction(spec, grid, m, *pair, norm="bv")
        bound = bv_contraction_factor(spec.scaling, m) * inp
        passed &= out <= bound * (1 + 1e-12)
        worst = max(worst, out / bound)
    acceptance(8, "BV contraction", passed, f"max measured/bound {worst:.3f}")
    assert passed


def test_ac09_dimension_one(acceptance):
    start = time.perf_counter()
    spec = make_spec(builtin_germ("sine-like"), np.linspace(0, 1, 5), [[0.1] * 4],
                     [BaseOperator("blend", 0.2), BaseOperator("blend", 0.5), BaseOperator("blend", 0.8)])
    rep = dimension_report(spec, "bv", (4, 10))
    elapsed = time.perf_counter() - start
    slope = rep.estimate.slope
    ok = rep.conditions.passed and 0.95 <= slope <= 1.15 and elapsed < 30
    acceptance(9, "BV fractal has dimension one", ok, f"slope {slope:.4f}, {elapsed:.2f}s")
    assert ok


def test_ac10_oscillation_calculus(acceptance):
    rng = np.random.default_rng(1010)
    rel = 1e-12
    passed = True
    for _ in range(50):
        f, g = random_dyadic_pl(rng), random_dyadic_pl(rng)
        lam = float(rng.uniform(-4, 4))
        fg = product_carrier(f, g, 8)
        nf, ng = f.sup_norm(), g.sup_norm()
        for k in range(1, 9):
            Rf, Rg = oscillation_sum(f, k), oscillation_sum(g, k)
            passed &= math.isclose(oscillation_sum(lam * f, k), abs(lam) * Rf, rel_tol=rel, abs_tol=0)
            passed &= oscillation_sum(f + g, k) <= (Rf + Rg) * (1 + rel)
            passed &= oscillation_sum(fg, k) <= (ng * Rf + nf * Rg) * (1 + rel)
            passed &= sandwich(f, k).holds and sandwich(fg, k).holds
    acceptance(10, "oscillation calculus and sandwich", passed, "50 pairs, k = 1..8")
    assert passed


def test_ac11_convex_lipschitz(acceptance):
    rng = np.random.default_rng(1111)
    half = ThetaFunction.power(0.5)
    affine_zero = all(
        convex_seminorm(SampledFunction([0, 1], rng.normal(size=2)), half) <= 1e-12
        for _ in range(5)
    )
    subadditive = True
    for _ in range(10):
        f, g = random_pl(rng, 10), random_pl(rng, 10)
        total = convex_seminorm(f, half) + convex_seminorm(g, half)
        subadditive &= convex_seminorm(f + g, half) <= total * (1 + 1e-12)
    spec = make_spec(builtin_germ("parabola-bump"), [0, 0.5, 1], [[0.6, 0.6]], [BaseOperator("knot_pl")])
    rep = dimension_report(spec, "convex", (4, 10), theta=half)
    s = np.linspace(0, 1, 4097)
    square = convex_seminorm(lambda x: np.asarray(x) ** 2, ThetaFunction.custom(s, s ** 2))
    ok = (affine_zero and subadditive and rep.status == "PASS" and rep.estimate.slope <= 1.6
          and abs(square - 0.25) <= 1e-6)
    acceptance(11, "convex Lipschitz", ok,
               f"slope {rep.estimate.slope:.3f}, [x^2]* {square:.8f}, subadditive {subadditive}")
    assert ok


def test_ac12_set_ifs(acceptance):
    tol = 1e-4
    cantor = IfsLevel([ContractionMap2D.similitude(1 / 3), ContractionMap2D.similitude(1 / 3, (2 / 3, 0))])
    rep = backward_trajectory_sets([cantor], [[0, 0], [1, 0]], 30, tol)
    depth = math.ceil(math.log(tol) / math.log(1 / 3))
    net = {Fraction(0), Fraction(1)}
    for _ in range(depth):
        net = {x / 3 for x in net} | {x / 3 + Fraction(2, 3) for x in net}
    oracle = np.array([[float(x), 0.0] for x in sorted(net)])
    h_cantor = hausdorff_distance(rep.points, oracle)

    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    fam_a = IfsLevel([ContractionMap2D.towards(0.5, v) for v in verts])
    fam_b = IfsLevel([ContractionMap2D.towards(0.4, v) for v in verts])
    alt = backward_trajectory_sets([fam_a, fam_b], verts, 30, 1e-3)
    max_lip = max(fam_a.lipschitz, fam_b.lipschitz)

    radii = [(invariant_ball_radius([fam_a, fam_b], (0.5, 0.3), mu, M), M / (1 - mu))
             for mu, M in ((0.5, 1.0), (0.6, 2.5), (0.75, 3.0))]
    ok = (h_cantor <= tol and alt.converged and alt.ratio <= max_lip + 0.05
          and all(r == expected for r, expected in radii))
    acceptance(12, "set IFS trajectories", ok,
               f"cantor h {h_cantor:.1e}, alternating ratio {alt.ratio:.3f}, radii {[r for r, _ in radii]}")
    assert ok


def test_ac13_reproducible_cli(acceptance, tmp_path):
    runs = {}
    for attempt in range(2):
        outputs = []
        for name in ("build_bv", "bounds", "check_bv", "ifs_cantor", "evaluate"):
            csv = tmp_path / f"{name}_{attempt}.csv"
            rep = tmp_path / f"{name}_{attempt}.json"
            proc = subprocess.run(
                [sys.executable, "-m", "nsfrac.cli", "run", "-c", str(ROOT / "configs" / f"{name}.json"),
                 "-o", str(csv), "--report", str(rep), "--seed", "17"],
                capture_output=True, text=True,
            )
            assert proc.returncode == 0, proc.stderr
            json.loads(rep.read_text())
            outputs.append((csv.read_bytes() if csv.exists() else b"", rep.read_bytes()))
        runs[attempt] = outputs
    ok = runs[0] == runs[1]
    acceptance(13, "reproducible CLI outputs", ok, "5 configs, two runs each")
    assert ok
