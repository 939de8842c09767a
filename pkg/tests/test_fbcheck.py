"""Tests for free-boundary diagnostics."""

import functools
import math

import numpy as np
import pytest

from onephase.field import (
    DomainError,
    PolyBump,
    ScalarField,
    VectorFieldSpec,
    evaluate,
    make_grid,
)
from onephase.fbcheck import (
    CheckReport,
    blowdown,
    check_from_json,
    check_to_json,
    density_scan,
    exit_radius,
    hausdorff_distance,
    l1_gap,
    level_region,
    lipschitz_constant,
    load_region,
    nondegeneracy_scan,
    poincare_ratio,
    save_region,
    zero_phase_density,
)
from onephase.ode1d import solve_monotone, solve_wedge
from onephase.potentials import make_reference
from onephase.solver import SolveConfig, minimize

TERM = make_reference(1.0)
TAU = 0.5


@functools.cache
def _base_profile():
    return solve_monotone(TERM, -30.0, 30.0, 1e-3)


def _profile_field(eps, lo, hi, n):
    grid = make_grid((lo, lo), (hi, hi), n)
    ym = np.meshgrid(*grid.axes(), indexing="ij")[1]
    base = _base_profile()
    return ScalarField(grid=grid, values=eps * np.interp(ym / eps, base.t, base.V))


def _halfplane(n):
    grid = make_grid((-1.0, -1.0), (1.0, 1.0), n)
    ym = np.meshgrid(*grid.axes(), indexing="ij")[1]
    return ScalarField(grid=grid, values=np.maximum(ym, 0.0))


@functools.cache
def _wedge_field(eps):
    wedge = solve_wedge(TERM, eps, eps, 40.0 * eps, 1e-4)
    grid = make_grid(-1.0, 1.0, 2001)
    return ScalarField(grid=grid, values=np.interp(grid.axes()[0], wedge.t, wedge.V))


def test_level_region_of_zero_field():
    grid = make_grid((-1.0, -1.0), (1.0, 1.0), 21)
    u = ScalarField(grid=grid, values=np.zeros(grid.shape))
    z = level_region(u, TERM, 0.1, "Z", TAU)
    f = level_region(u, TERM, 0.1, "F", TAU)
    assert len(z) == grid.shape[0] * grid.shape[1]
    assert len(f) == 0


def test_level_region_strip_indices():
    u = _halfplane(201)
    eps = 0.1
    region = level_region(u, TERM, eps, "F", TAU)
    rows = np.unique(region.indices[:, 1])
    ys = u.grid.axes()[1][rows]
    h = u.grid.h
    assert TAU * eps - 1e-9 <= ys.min() <= TAU * eps + h
    assert TERM.T * eps - h <= ys.max() <= TERM.T * eps + 1e-9
    assert len(region) == len(rows) * u.grid.shape[0]
    sampled = u.values[tuple(region.indices.T)]
    assert np.all((sampled >= region.lo) & (sampled <= region.hi))


def test_level_region_bands_overlap_at_theta():
    # values hit theta * eps exactly at node 2 (0.05 = 2 * 0.025 holds
    # bitwise), pinning the one-node overlap of the two bands
    grid = make_grid(0.0, 1.0, 21)
    u = ScalarField(grid=grid, values=np.arange(21) * 0.025)
    eps = 0.1
    z = level_region(u, TERM, eps, "Z", TAU)
    f = level_region(u, TERM, eps, "F", TAU)
    zset = set(map(tuple, z.indices))
    fset = set(map(tuple, f.indices))
    assert zset & fset == {(2,)}
    below_t = set(map(tuple, np.argwhere(u.values <= TERM.T * eps)))
    assert (zset | fset) == below_t


def test_level_region_monotone_in_theta():
    u = _profile_field(0.2, -1.0, 1.0, 101)
    counts = [
        len(level_region(u, TERM, 0.2, "Z", th)) for th in (TAU / 4, TAU / 2, TAU, 1.0)
    ]
    assert counts == sorted(counts)
    quarter = set(map(tuple, level_region(u, TERM, 0.2, "Z", TAU / 4).indices))
    full = set(map(tuple, level_region(u, TERM, 0.2, "Z", TAU).indices))
    assert quarter <= full


def test_level_region_validation():
    u = _halfplane(21)
    with pytest.raises(ValueError):
        level_region(u, TERM, 0.1, "Q", TAU)
    with pytest.raises(ValueError):
        level_region(u, TERM, 0.1, "Z", 0.0)
    with pytest.raises(ValueError):
        level_region(u, TERM, 0.1, "Z", TERM.T + 0.1)
    with pytest.raises(ValueError):
        level_region(u, TERM, 0.0, "Z", TAU)


def test_save_load_region_roundtrip(tmp_path):
    u = _halfplane(51)
    region = level_region(u, TERM, 0.1, "Z", TAU)
    path = tmp_path / "region.csv"
    save_region(region, path)
    again = load_region(path)
    assert np.array_equal(again.indices, region.indices)
    assert again.lo == region.lo and again.hi == region.hi
    assert again.eps == region.eps and again.theta == region.theta


def test_nondegeneracy_halfplane_discrete_constant():
    # centers sit one row above the zero line, so the measured constant
    # exceeds 1 by exactly h/r
    u = _halfplane(201)
    h = u.grid.h
    report = nondegeneracy_scan(u, 1e-6, 0.5, [0.25, 0.5])
    for r, c in zip(report.params, report.values):
        assert c == pytest.approx((r + h) / r, rel=1e-12)
        assert c >= 1.0


def test_nondegeneracy_scales_linearly():
    u = _halfplane(201)
    doubled = ScalarField(grid=u.grid, values=2.0 * u.values)
    base = nondegeneracy_scan(u, 1e-6, 0.5, [0.25, 0.5])
    scaled = nondegeneracy_scan(doubled, 2e-6, 0.5, [0.25, 0.5])
    assert all(s == 2.0 * b for s, b in zip(scaled.values, base.values))


def test_nondegeneracy_wedge_family_degenerates():
    cs = {}
    for eps in (0.05, 0.025):
        report = nondegeneracy_scan(_wedge_field(eps), eps, 0.125, [1.0])
        cs[eps] = report.values[0]
        assert cs[eps] <= 2.0 * eps
    assert cs[0.025] / cs[0.05] == pytest.approx(0.5, abs=0.08)


def test_nondegeneracy_empty_scan():
    grid = make_grid((-1.0, -1.0), (1.0, 1.0), 21)
    u = ScalarField(grid=grid, values=np.zeros(grid.shape))
    report = nondegeneracy_scan(u, 1.0, 0.5, [0.25])
    assert report.values == ()
    assert report.worst is None
    assert not report.passed


def test_nondegeneracy_validation():
    u = _halfplane(51)
    with pytest.raises(ValueError):
        nondegeneracy_scan(u, 0.0, 0.5, [0.25])
    with pytest.raises(ValueError):
        nondegeneracy_scan(u, 0.1, 0.5, [])
    with pytest.raises(ValueError):
        nondegeneracy_scan(u, 0.1, 0.5, [-0.1])
    with pytest.raises(ValueError):
        nondegeneracy_scan(u, 1e-6, 0.5, [1.5])


def test_density_profile_thick_ball_passes():
    u = _profile_field(0.1, -2.0, 2.0, 401)
    report = density_scan(u, 0.1, 24.0, [2.4], threshold=0.4)
    assert report.passed
    assert 0.40 <= report.worst <= 0.46


def test_density_profile_thin_ball_reveals_band_offset():
    # at r = 5 eps the low set starts a fixed fraction of the ball radius
    # below the worst band center, so the measured fraction drops well
    # under one half
    u = _profile_field(0.1, -2.0, 2.0, 401)
    report = density_scan(u, 0.1, 5.0, [0.5])
    assert 0.15 <= report.worst <= 0.25


def test_density_wedge_slab_fails():
    eps = 0.05
    report = density_scan(_wedge_field(eps), eps, 5.0, [0.5], threshold=0.1)
    assert report.worst == 0.0
    assert not report.passed


def test_density_empty_band():
    grid = make_grid((-1.0, -1.0), (1.0, 1.0), 21)
    u = ScalarField(grid=grid, values=np.full(grid.shape, 0.9))
    report = density_scan(u, 0.1, 1.0, [0.5])
    assert report.values == ()
    assert report.worst is None


def test_density_rescale_invariance():
    # u -> u(2x)/2 with eps -> eps/2 and r -> r/2 reproduces the same
    # discrete balls and profile samples, so the fractions agree exactly
    coarse = _profile_field(0.2, -2.0, 2.0, 401)
    fine = _profile_field(0.1, -1.0, 1.0, 401)
    r1 = density_scan(coarse, 0.2, 12.0, [2.4])
    r2 = density_scan(fine, 0.1, 12.0, [1.2])
    assert r1.worst == pytest.approx(r2.worst, rel=1e-12)


def test_density_validation():
    u = _profile_field(0.1, -1.0, 1.0, 101)
    with pytest.raises(ValueError):
        density_scan(u, 0.1, 10.0, [0.5])
    with pytest.raises(ValueError):
        density_scan(u, 0.1, 0.0, [0.5])
    with pytest.raises(ValueError):
        density_scan(u, 0.0, 1.0, [0.5])


def test_zero_phase_density_halfplane():
    u = _halfplane(201)
    r = 0.25
    report = zero_phase_density(u, [r])
    assert 0.5 - 2.0 * u.grid.h / r <= report.worst <= 0.5


def test_zero_phase_density_radial():
    grid = make_grid((-1.0, -1.0), (1.0, 1.0), 1001)
    xm, ym = np.meshgrid(*grid.axes(), indexing="ij")
    rr = np.sqrt(xm**2 + ym**2)
    vals = np.where(rr > 0.5, 0.5 * np.log(np.maximum(rr, 1e-12) / 0.5), 0.0)
    u = ScalarField(grid=grid, values=vals)
    report = zero_phase_density(u, [0.1])
    assert 0.45 <= report.worst <= 0.5


def test_zero_phase_density_positive_field_empty():
    grid = make_grid((-1.0, -1.0), (1.0, 1.0), 21)
    u = ScalarField(grid=grid, values=np.full(grid.shape, 1.0))
    report = zero_phase_density(u, [0.25])
    assert report.values == ()
    assert not report.passed


def test_lipschitz_examples():
    u = _halfplane(201)
    assert lipschitz_constant(u) == pytest.approx(1.0, rel=1e-9)
    grid = make_grid(-1.0, 1.0, 101)
    lin = ScalarField(grid=grid, values=3.0 * grid.axes()[0])
    assert lipschitz_constant(lin) == pytest.approx(3.0, rel=1e-9)
    assert lipschitz_constant(u, ((-1.0, -1.0), (1.0, -0.5))) == 0.0


def test_lipschitz_uniform_over_solved_family():
    line = make_grid(-1.0, 1.0, 201)
    base = _base_profile()
    for eps in (0.2, 0.1, 0.05):
        bc = ScalarField(
            grid=line, values=eps * np.interp(line.axes()[0] / eps, base.t, base.V)
        )
        col, report = minimize(
            bc, bc, TERM, SolveConfig(eps=eps, tol_residual=1e-8, max_iter=40_000)
        )
        assert report.converged
        grid = make_grid((-1.0, -1.0), (1.0, 1.0), 201)
        u = ScalarField(grid=grid, values=np.tile(col.values, (201, 1)))
        assert lipschitz_constant(u) <= 1.1


def test_exit_radius_zero_when_already_above():
    eps = 0.1
    grid = make_grid(-1.0, 1.0, 2001)
    base = _base_profile()
    u = ScalarField(
        grid=grid, values=eps * np.interp(grid.axes()[0] / eps, base.t, base.V)
    )
    k = int(np.argmax(u.values >= TAU * eps))
    assert exit_radius(u, eps, TAU / 4, [grid.axes()[0][k]]) == 0.0


def test_exit_radius_profile_log_growth():
    eps = 0.1
    grid = make_grid(-1.0, 1.0, 2001)
    base = _base_profile()
    u = ScalarField(
        grid=grid, values=eps * np.interp(grid.axes()[0] / eps, base.t, base.V)
    )
    expected = {TAU / 2: 0.37, TAU / 4: 0.69, TAU / 8: 0.99}
    rates = []
    for theta, want in expected.items():
        k = int(np.argmax(u.values >= theta * eps))
        r = exit_radius(u, eps, theta, [grid.axes()[0][k]])
        assert r / eps == pytest.approx(want, abs=0.03)
        rates.append(r / (eps * math.log(TAU / theta)))
    assert max(rates) / min(rates) <= 1.2


def test_exit_radius_unreachable_is_inf():
    grid = make_grid(-1.0, 1.0, 201)
    u = ScalarField(grid=grid, values=np.full(201, 0.03))
    assert exit_radius(u, 0.1, 0.25, [0.0]) == math.inf


def test_exit_radius_validation():
    u = _halfplane(51)
    with pytest.raises(ValueError):
        exit_radius(u, 0.1, TAU, [0.0, 0.5])
    with pytest.raises(ValueError):
        exit_radius(u, 0.1, TAU / 4, [0.0, -0.5])
    with pytest.raises(ValueError):
        exit_radius(u, 0.0, TAU / 4, [0.0, 0.5])


def test_poincare_zero_field():
    grid = make_grid((-1.0, -1.0), (1.0, 1.0), 41)
    g = ScalarField(grid=grid, values=np.zeros(grid.shape))
    assert poincare_ratio(g, None, 0.3) == 0.0


def test_poincare_clamp_field():
    grid = make_grid((-1.0, -1.0), (1.0, 1.0), 401)
    xm = np.meshgrid(*grid.axes(), indexing="ij")[0]
    g = ScalarField(grid=grid, values=np.maximum(xm, 0.0))
    ratio = poincare_ratio(g, None, 0.3)
    assert ratio <= 1.0
    assert ratio == pytest.approx(1.0 / (2.0 * math.sqrt(2.0)), abs=0.01)


def test_poincare_random_bumps_bounded():
    grid = make_grid((-1.0, -1.0), (1.0, 1.0), 101)
    nodes = grid.nodes()
    rng = np.random.default_rng(11)
    zero = PolyBump(coeffs=np.zeros((4, 4)), center=(0.0, 0.0), halfwidths=(0.3, 0.3))
    for _ in range(50):
        coeffs = np.zeros((4, 4))
        for a in range(4):
            for b in range(4 - a):
                coeffs[a, b] = rng.uniform(-1.0, 1.0)
        bump = PolyBump(
            coeffs=coeffs,
            center=tuple(rng.uniform(-0.3, 0.3, size=2)),
            halfwidths=tuple(rng.uniform(0.3, 0.6, size=2)),
        )
        spec = VectorFieldSpec(dim=2, components=(bump, zero))
        g = ScalarField(
            grid=grid, values=evaluate(spec, nodes)[:, 0].reshape(grid.shape)
        )
        assert poincare_ratio(g, None, 0.3) <= 1.0


def test_poincare_rejects_broken_promise():
    grid = make_grid((-1.0, -1.0), (1.0, 1.0), 41)
    g = ScalarField(grid=grid, values=np.ones(grid.shape))
    with pytest.raises(ValueError):
        poincare_ratio(g, None, 0.3)


def test_l1_gap_halves_with_eps():
    limit = _halfplane(201)
    gaps = {
        eps: l1_gap(_profile_field(eps, -1.0, 1.0, 201), limit, TERM, eps)
        for eps in (0.2, 0.1, 0.05)
    }
    assert 1.5 <= gaps[0.2] / gaps[0.1] <= 2.5
    assert 1.5 <= gaps[0.1] / gaps[0.05] <= 2.5


def test_l1_gap_saturated_indicator_is_zero():
    grid = make_grid((-1.0, -1.0), (1.0, 1.0), 101)
    ym = np.meshgrid(*grid.axes(), indexing="ij")[1]
    eps = 0.1
    u = ScalarField(grid=grid, values=5.0 * eps * (ym > 0.0))
    assert l1_gap(u, u, TERM, eps) == 0.0


def test_l1_gap_subgrid_transition():
    eps = 1e-4
    u = _profile_field(eps, -1.0, 1.0, 201)
    gap = l1_gap(u, _halfplane(201), TERM, eps)
    assert gap <= 2.0 * u.grid.h + 1e-12


def test_l1_gap_validation():
    a = _halfplane(51)
    b = _halfplane(101)
    with pytest.raises(ValueError):
        l1_gap(a, b, TERM, 0.1)
    with pytest.raises(ValueError):
        l1_gap(a, a, TERM, 0.0)


def test_hausdorff_basic():
    a = np.array([[0, 0], [0, 1], [0, 2]])
    assert hausdorff_distance(a, a, 0.1) == 0.0
    line1 = np.stack([np.full(5, 3), np.arange(5)], axis=1)
    line2 = np.stack([np.full(5, 7), np.arange(5)], axis=1)
    assert hausdorff_distance(line1, line2, 0.1) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        hausdorff_distance(np.empty((0, 2)), a, 0.1)
    with pytest.raises(ValueError):
        hausdorff_distance(a, a, 0.0)


def test_hausdorff_band_tracks_limit_boundary():
    from onephase.fbcheck import _limit_boundary

    limit = _halfplane(201)
    f0 = np.argwhere(_limit_boundary(limit.values))
    for eps in (0.2, 0.1, 0.05):
        u = _profile_field(eps, -1.0, 1.0, 201)
        band = level_region(u, TERM, eps, "F", TAU)
        d = hausdorff_distance(band.indices, f0, u.grid.h)
        assert d <= TERM.T * eps + u.grid.h + 1e-12


def test_blowdown_identity_and_linearity():
    grid = make_grid(-1.0, 1.0, 101)
    u = ScalarField(grid=grid, values=np.sin(grid.axes()[0]))
    same = blowdown(u, 1.0, grid)
    assert np.allclose(same.values, u.values, atol=1e-12)
    lin = ScalarField(grid=grid, values=0.7 * grid.axes()[0])
    target = make_grid(-0.25, 0.25, 51)
    out = blowdown(lin, 0.25, target)
    assert np.allclose(out.values, 0.7 * target.axes()[0], atol=1e-12)


def test_blowdown_profile_converges_to_ramp():
    grid = make_grid(-50.0, 50.0, 10001)
    base = _base_profile()
    u = ScalarField(grid=grid, values=np.interp(grid.axes()[0], base.t, base.V))
    target = make_grid(-1.0, 1.0, 201)
    ramp = np.maximum(target.axes()[0], 0.0)
    errs = {}
    for eps in (0.1, 0.05):
        out = blowdown(u, eps, target)
        errs[eps] = float(np.max(np.abs(out.values - ramp)))
        assert errs[eps] <= 1.01 * eps
    assert errs[0.05] / errs[0.1] == pytest.approx(0.5, abs=0.05)


def test_blowdown_validation():
    grid = make_grid(-1.0, 1.0, 101)
    u = ScalarField(grid=grid, values=np.zeros(101))
    with pytest.raises(ValueError):
        blowdown(u, 0.0, grid)
    with pytest.raises(DomainError):
        blowdown(u, 1e-3, grid)


def test_check_report_invariants_enforced():
    with pytest.raises(ValueError):
        CheckReport(
            check="x", params=(1.0,), values=(2.0,), worst=1.0,
            threshold=0.0, passed=True,
        )
    with pytest.raises(ValueError):
        CheckReport(
            check="x", params=(1.0,), values=(2.0,), worst=2.0,
            threshold=0.0, passed=False,
        )
    with pytest.raises(ValueError):
        CheckReport(
            check="x", params=(), values=(), worst=None,
            threshold=0.0, passed=True,
        )
    with pytest.raises(ValueError):
        CheckReport(
            check="x", params=(1.0,), values=(math.nan,), worst=math.nan,
            threshold=0.0, passed=False,
        )
    with pytest.raises(ValueError):
        CheckReport(
            check="x", params=(1.0,), values=(1.0,), worst=1.0,
            threshold=0.0, passed=True, sense="median",
        )


def test_check_report_json_roundtrip():
    report = nondegeneracy_scan(_halfplane(51), 1e-6, 0.5, [0.25], threshold=0.5)
    payload = check_to_json(report)
    assert payload["pass"] is True
    assert check_from_json(payload) == report
    empty = density_scan(
        ScalarField(
            grid=make_grid((-1.0, -1.0), (1.0, 1.0), 21),
            values=np.full((21, 21), 0.9),
        ),
        0.1,
        1.0,
        [0.5],
    )
    assert check_to_json(empty)["worst"] is None
    assert check_from_json(check_to_json(empty)) == empty