import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from elcontrol.grid import (
    AdmissibleSpec,
    CellField,
    GridError,
    l1_distance,
    l1_distance_across_grids,
    lip_minus_discrete,
    make_grid,
    project_admissible,
    project_function,
    total_variation,
)


def bump(x):
    return np.where(np.abs(x) <= 0.5, -x**2 + 0.25, 0.0) + 0.2


def bump_antiderivative(x):
    # exact primitive of bump, continuous across |x| = 0.5
    xc = np.clip(x, -0.5, 0.5)
    return 0.2 * x + 0.25 * xc - xc**3 / 3.0


@pytest.mark.parametrize("dx, n", [(0.01, 200), (0.002, 1000)])
def test_make_grid_counts(dx, n):
    g = make_grid(-1, 1, dx)
    assert g.n_cells == n
    assert g.midpoints[0] == pytest.approx(-1 + dx / 2)


def test_make_grid_rejects_fractional_count():
    with pytest.raises(GridError, match="0.03"):
        make_grid(-1, 1, 0.03)


def test_project_constant():
    g = make_grid(-1, 1, 0.01)
    f = project_function(lambda x: 0.45 + 0 * x, g)
    assert np.max(np.abs(f.values - 0.45)) <= 1e-14


def test_project_step_straddling_cell_is_half():
    g = make_grid(-0.5, 0.5, 0.2)  # middle cell is [-0.1, 0.1]
    f = project_function(lambda x: (x >= 0).astype(float), g)
    assert f.values[2] == 0.5
    assert f.values[0] == 0.0 and f.values[-1] == 1.0


def test_project_bump_matches_exact_cell_averages():
    g = make_grid(-1, 1, 0.002)
    f = project_function(bump, g)
    e = g.edges
    exact = (bump_antiderivative(e[1:]) - bump_antiderivative(e[:-1])) / g.dx
    np.testing.assert_allclose(f.values, exact, atol=1e-13)
    assert f.values.max() == pytest.approx(0.45, abs=1e-5)
    assert f.values[0] == pytest.approx(0.2) and f.values[-1] == pytest.approx(0.2)


def test_l1_examples():
    g = make_grid(-1, 1, 0.01)
    zero = CellField(g, np.zeros(g.n_cells))
    c = CellField(g, np.full(g.n_cells, 0.3))
    assert l1_distance(c, c, (-1, 1)) == 0.0
    assert l1_distance(zero, c, (-1, 1)) == pytest.approx(0.6)
    step = CellField(g, (g.midpoints > 0).astype(float))
    assert l1_distance(step, zero, (-1, 1)) == pytest.approx(1.0, abs=1e-12)


def test_l1_grid_mismatch():
    a = CellField(make_grid(-1, 1, 0.01), np.zeros(200))
    b = CellField(make_grid(-1, 1, 0.02), np.zeros(100))
    with pytest.raises(GridError, match="mismatch"):
        l1_distance(a, b, (-1, 1))


def test_l1_window_must_align():
    g = make_grid(-1, 1, 0.01)
    a = CellField(g, np.zeros(200))
    with pytest.raises(GridError):
        l1_distance(a, a, (-0.995, 1))


def test_l1_across_grids_agrees_with_refinement():
    coarse = make_grid(-1, 1, 0.01)
    fine = make_grid(-1, 1, 0.002)
    rng = np.random.default_rng(0)
    a = CellField(coarse, rng.random(200))
    b = CellField(fine, rng.random(1000))
    a_fine = CellField(fine, np.repeat(a.values, 5))
    assert l1_distance_across_grids(a, b, (-1, 1)) == pytest.approx(l1_distance(a_fine, b, (-1, 1)), rel=1e-12)


def test_total_variation_examples():
    g = make_grid(-1, 1, 0.01)
    assert total_variation(CellField(g, np.full(200, 0.7))) == 0.0
    assert total_variation(CellField(g, 0.5 * (g.midpoints > 0))) == 0.5
    fine = make_grid(-1, 1, 0.002)
    assert abs(total_variation(project_function(bump, fine)) - 0.5) <= 2 * fine.dx


def test_lip_minus_examples():
    g = make_grid(-1, 1, 0.01)
    assert lip_minus_discrete(CellField(g, np.full(200, 0.3))) == 0.0
    assert lip_minus_discrete(CellField(g, 0.5 * (g.midpoints < 0))) == pytest.approx(50.0)
    inc = CellField(g, 0.001 * np.arange(200))
    assert lip_minus_discrete(inc) == pytest.approx(-0.1)


def test_project_admissible_examples():
    g = make_grid(-1, 1, 0.01)
    spec = AdmissibleSpec(support=(-1.0, 1.0), tv_bound=1.0)
    u_init = project_function(lambda x: 0.25 * (x >= 0) + 0.2, g)
    out = project_admissible(u_init, spec)
    assert out.field == u_init
    assert out.tv == pytest.approx(0.25)
    assert out.within_tv_bound
    high = project_admissible(CellField(g, np.full(200, 1.2)), spec)
    assert np.all(high.field.values == 1.0)


def test_project_admissible_support_and_tv_flag():
    g = make_grid(-1, 1, 0.1)
    spec = AdmissibleSpec(support=(-0.5, 0.5), tv_bound=0.1)
    out = project_admissible(CellField(g, np.full(20, 0.6)), spec)
    assert np.all(out.field.values[np.abs(g.midpoints) > 0.5] == 0.0)
    assert out.tv == pytest.approx(1.2)
    assert not out.within_tv_bound


fields = arrays(np.float64, 40, elements=st.floats(-0.5, 1.5, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(fields, fields, fields)
def test_l1_is_a_metric(a, b, c):
    g = make_grid(-1, 1, 0.05)
    fa, fb, fc = (CellField(g, v) for v in (a, b, c))
    w = (-1, 1)
    assert l1_distance(fa, fb, w) == l1_distance(fb, fa, w)
    assert l1_distance(fa, fc, w) <= l1_distance(fa, fb, w) + l1_distance(fb, fc, w) + 1e-12


@settings(max_examples=60, deadline=None)
@given(fields)
def test_projection_properties(v):
    g = make_grid(-1, 1, 0.05)
    f = CellField(g, v)
    spec = AdmissibleSpec()
    once = project_admissible(f, spec).field
    twice = project_admissible(once, spec).field
    assert np.array_equal(once.values, twice.values)
    assert total_variation(once) <= total_variation(f) + 1e-12
    assert lip_minus_discrete(f) <= total_variation(f) / g.dx + 1e-9
