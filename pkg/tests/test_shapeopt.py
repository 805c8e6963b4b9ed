import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quadsurf.grid import (Disk, GeometryError, Grid, LevelSet, ScalarField, SourceSpec,
                           extract_boundary, rectangle, signed_distance, volume_integral)
from quadsurf.oracle import radial_cascade
from quadsurf.pde import boundary_gradient, solve_cascade, solve_poisson
from quadsurf.shapeopt import (DescentParams, GSpec, extend_and_advect, functional_bilap,
                               functional_qs, project_containment, shape_velocity_bilap,
                               shape_velocity_qs, solve_bilap, solve_qs)

F_STEP = SourceSpec([(Disk((0, 0), 0.5), 4.0)])


def mean_radius(ls):
    t = extract_boundary(ls)
    return float(np.dot(t.weights, np.hypot(*t.points.T)) / t.weights.sum())


@pytest.fixture(scope="module")
def unit_disk():
    g = Grid.square(1.5, 128)
    return signed_distance(Disk((0, 0), 1.0), g)


# -- g ---------------------------------------------------------------------------

def test_gspec_kinds_and_positivity():
    pts = np.array([[3.0, 4.0], [0.0, 1.0]])
    assert np.allclose(GSpec.constant(0.25)(pts), 0.25)
    assert np.allclose(GSpec.radial_power(1 / 8, 1.0)(pts), [5 / 8, 1 / 8])
    with pytest.raises(ValueError):
        GSpec.constant(0.0)
    with pytest.raises(ValueError):
        GSpec.radial_power(1.0, 1.0)(np.array([[0.0, 0.0]]))
    grid = Grid.square(1.0, 16)
    tab = GSpec("tabulated", table=ScalarField(grid, np.full(grid.shape, 2.0)))
    assert np.allclose(tab(pts[1:]), 2.0)
    assert tab.scaled(0.5)(pts[1:]) == pytest.approx(1.0)
    neg = GSpec("tabulated", table=ScalarField(grid, np.full(grid.shape, -1.0)))
    with pytest.raises(ValueError):
        neg(pts[1:])


def test_descent_params_validation():
    assert DescentParams().to_json() == {"cfl": 0.5, "max_iters": 500, "tol_residual": 0.05,
                                         "reinit_every": 5, "backtrack_max": 8}
    for bad in ({"cfl": 0.0}, {"cfl": 1.5}, {"tol_residual": 0.0}, {"reinit_every": 0}):
        with pytest.raises(ValueError):
            DescentParams(**bad)


# -- functionals -------------------------------------------------------------------

def test_functional_qs_unit_disk(unit_disk):
    assert functional_qs(unit_disk, 1.0, GSpec.constant(0.5)) == pytest.approx(math.pi / 8, rel=0.03)


def test_functional_bilap_unit_disk(unit_disk):
    val = functional_bilap(unit_disk, 1.0, GSpec.constant(1 / 32))
    assert val == pytest.approx(math.pi / 48, rel=0.03)
    sq = functional_bilap(unit_disk, 1.0, GSpec.constant(1 / 32), g_squared=True)
    assert sq == pytest.approx(math.pi / 1024 - math.pi / 96, rel=0.03)


def test_functionals_vanish_without_data(unit_disk):
    tiny = GSpec.constant(1e-300)
    assert functional_qs(unit_disk, 0.0, tiny) == pytest.approx(0.0, abs=1e-12)
    assert functional_bilap(unit_disk, 0.0, tiny) == pytest.approx(0.0, abs=1e-12)


def test_qs_step_toward_equilibrium_lowers_energy():
    grid = Grid.square(3.0, 96)
    g = GSpec.constant(0.25)
    J = [functional_qs(signed_distance(Disk((0, 0), r), grid), F_STEP, g) for r in (1.0, 1.2, 2.0)]
    assert J[0] > J[1] > J[2]
    over = [functional_qs(signed_distance(Disk((0, 0), r), grid), F_STEP, g) for r in (2.6, 2.3)]
    assert over[0] > over[1] > J[2]


def test_bilap_descent_step_lowers_energy():
    # |u'||v'| grows with R here, so below R* the descent direction is inward
    grid = Grid.square(3.0, 96)
    u, v = radial_cascade(4.0, 0.5, 2.0)
    g = GSpec.constant(abs(u.du_R * v.du_R))
    J = [functional_bilap(signed_distance(Disk((0, 0), r), grid), F_STEP, g) for r in (1.3, 1.0, 2.0)]
    assert J[1] < J[0] < J[2]
    rep = solve_bilap(F_STEP, g, Disk((0, 0), 1.3), DescentParams(max_iters=3), grid)
    assert rep.history[1]["J"] < rep.history[0]["J"]
    assert rep.history[1]["area"] < rep.history[0]["area"]


# -- speeds ---------------------------------------------------------------------------

def radial_speed(R, k, n=128):
    grid = Grid.square(1.25 * R, n)
    ls = signed_distance(Disk((0, 0), R), grid)
    bg = boundary_gradient(solve_poisson(ls, F_STEP))
    return shape_velocity_qs(bg, GSpec.constant(k)), grid.h


def test_qs_speed_expands_small_ball():
    speed, h = radial_speed(1.0, 0.25)
    assert np.all(speed > 0)
    assert np.abs(speed - 0.1875).max() <= 2 * h


def test_qs_speed_shrinks_large_ball():
    speed, h = radial_speed(4.0, 0.25)
    assert np.all(speed < 0)
    assert np.abs(speed - (0.015625 - 0.0625)).max() <= 2 * h * 0.25


def test_qs_speed_zero_at_equilibrium():
    speed, h = radial_speed(2.0, 0.25, 256)
    assert np.abs(speed).max() <= 2 * h * 0.25


def test_bilap_speeds(unit_disk):
    u, v = solve_cascade(unit_disk, 1.0, 2)
    bu, bv = boundary_gradient(u), boundary_gradient(v)
    h = unit_disk.grid.h
    up = shape_velocity_bilap(bu, bv, GSpec.constant(1 / 64))
    down = shape_velocity_bilap(bu, bv, GSpec.constant(1 / 16))
    assert np.all(up > 0) and np.abs(up - 1 / 64).max() <= h / 8
    assert np.all(down < 0) and np.abs(down - (1 / 32 - 1 / 16)).max() <= h / 8
    exact = GSpec("tabulated", table=ScalarField(unit_disk.grid, np.full(unit_disk.grid.shape, 1 / 32)))
    assert np.abs(shape_velocity_bilap(bu, bv, exact)).max() <= h / 8


def test_flagged_vertices_get_zero_speed():
    grid = Grid.square(1.0, 64)
    ls = signed_distance(rectangle(-0.6, -0.01, 0.6, 0.01), grid, margin_cells=1.0)
    bg = boundary_gradient(solve_poisson(ls, 1.0))
    speed = shape_velocity_qs(bg, GSpec.constant(1.0))
    assert bg.flagged.any() and np.all(speed[bg.flagged] == 0)


# -- motion ----------------------------------------------------------------------------

@pytest.mark.parametrize("s", [1.0, -1.0])
def test_uniform_speed_moves_disk_radially(s):
    grid = Grid.square(3.0, 128)
    ls = signed_distance(Disk((0, 0), 1.5), grid)
    params = DescentParams()
    dt = params.cfl * grid.h
    steps = 20
    trace = extract_boundary(ls)
    out = extend_and_advect(ls, np.full(len(trace.points), s), params, trace, steps=steps)
    assert mean_radius(out) == pytest.approx(1.5 + s * dt * steps, abs=grid.h)


def test_zero_speed_is_identity(unit_disk):
    trace = extract_boundary(unit_disk)
    out = extend_and_advect(unit_disk, np.zeros(len(trace.points)))
    assert np.array_equal(out.phi, unit_disk.phi)


def test_non_finite_speed_rejected(unit_disk):
    trace = extract_boundary(unit_disk)
    with pytest.raises(ValueError):
        extend_and_advect(unit_disk, np.full(len(trace.points), np.nan))


def test_collapse_is_flagged():
    grid = Grid.square(1.0, 32)
    ls = signed_distance(Disk((0, 0), 0.2), grid)
    trace = extract_boundary(ls)
    with pytest.raises(GeometryError):
        extend_and_advect(ls, -np.ones(len(trace.points)), trace=trace, steps=60)


def test_containment_projection():
    grid = Grid.square(2.0, 64)
    hull = signed_distance(rectangle(-0.5, -0.5, 0.5, 0.5), grid)
    big = signed_distance(Disk((0, 0), 1.2), grid)
    assert np.array_equal(project_containment(big, hull).phi, big.phi)
    gone = LevelSet(grid, np.full(grid.shape, 10.0))
    assert np.array_equal(project_containment(gone, hull).phi, hull.phi)
    shifted = signed_distance(Disk((0.6, 0), 0.7), grid)
    fixed = project_containment(shifted, hull)
    assert np.all(fixed.phi[hull.phi < 0] < 0)
    assert volume_integral(LevelSet(grid, np.maximum(hull.phi, -fixed.phi))) == 0


# -- descent -------------------------------------------------------------------------------

def test_qs_stationary_at_equilibrium():
    grid = Grid.square(3.0, 128)
    rep = solve_qs(F_STEP, GSpec.constant(0.25), Disk((0, 0), 2.0), grid=grid)
    assert rep.status == "converged"
    assert rep.iterations <= 1


def test_bilap_stationary_at_oracle_ball():
    grid = Grid.square(3.0, 128)
    u, v = radial_cascade(4.0, 0.5, 2.0)
    g = GSpec.constant(abs(u.du_R * v.du_R))
    rep = solve_bilap(F_STEP, g, Disk((0, 0), 2.0), grid=grid)
    assert rep.status == "converged"
    assert rep.iterations <= 3
    assert abs(rep.mean_radius - 2.0) <= grid.h


def test_large_g_ends_on_hull():
    grid = Grid.square(2.0, 64)
    rep = solve_qs(F_STEP, GSpec.constant(2.0), grid=grid)
    assert rep.status == "constrained_at_hull"
    assert rep.hull_check["satisfied"]
    rep = solve_bilap(F_STEP, GSpec.constant(5.0), grid=grid)
    assert rep.status == "constrained_at_hull"


def test_report_json_is_plain_and_finite():
    import json
    grid = Grid.square(2.5, 48)
    rep = solve_qs(F_STEP, GSpec.constant(0.3), Disk((0, 0), 1.0), DescentParams(max_iters=5), grid)
    blob = json.loads(json.dumps(rep.to_json()))
    assert blob["status"] in ("converged", "max_iters", "constrained_at_hull")
    assert all(math.isfinite(x) for x in blob["history"]["residual_inf"])
    assert len(blob["history"]["J"]) == rep.iterations + 1


@settings(max_examples=12, deadline=None)
@given(k=st.floats(0.15, 1.0), r0=st.floats(0.6, 1.6), kind=st.sampled_from(["qs", "bilap"]))
def test_descent_is_monotone_and_contains_hull(k, r0, kind):
    grid = Grid.square(2.5, 32)
    params = DescentParams(max_iters=12)
    if kind == "qs":
        rep = solve_qs(F_STEP, GSpec.constant(k), Disk((0, 0), r0), params, grid)
    else:
        rep = solve_bilap(F_STEP, GSpec.constant(k / 16), Disk((0, 0), r0), params, grid)
    J = [e["J"] for e in rep.history]
    for a, b in zip(J, J[1:]):
        assert b <= a + 1e-12 * abs(a)
    assert all(e["hull_uncovered"] <= 1e-12 for e in rep.history)
