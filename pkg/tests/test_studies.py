import math

import numpy as np
import pytest

from elcontrol.grid import AdmissibleSpec, CellField, make_grid, project_function
from elcontrol.objectives import sample_reference
from elcontrol.optimize import OptimizerConfig
from elcontrol.studies import (
    COLUMNS,
    StudySpec,
    _Cell,
    _solve_cell,
    coarse_grid,
    coupled_mesh,
    make_reference,
    nl2l_solutions_study,
    reference_datum,
    run_study,
)

pytestmark = pytest.mark.filterwarnings("ignore::elcontrol.scheme.CFLWarning")


def test_local_reference():
    ref = make_reference("local")
    assert ref.trajectory.every_step
    assert ref.grid.dx == 0.002 and ref.trajectory.config.dt == 0.001
    assert float(reference_datum(0.0)) == 0.45
    # the cell [0, dx^d] averages 0.45 - x^2 to 0.45 - dx^2 / 3
    assert sample_reference(ref, 0.0, 0.0) == pytest.approx(0.45 - 0.002**2 / 3, abs=1e-14)
    assert ref.trajectory.values[0].tolist() == ref.initial.values.tolist()
    assert ref.trajectory.u_min >= 0.2 - 1e-12 and ref.trajectory.u_max <= 0.45 + 1e-12


def test_nonlocal_reference_needs_H():
    with pytest.raises(ValueError):
        make_reference("nonlocal")
    with pytest.raises(ValueError):
        make_reference("other")


def test_coupled_meshes():
    H = np.linspace(0.01, 0.1, 10)
    assert min(coupled_mesh(h, "half") for h in H) == pytest.approx(5e-3)
    assert abs(min(coupled_mesh(h, "power") for h in H) - 6.31e-3) <= 1e-5
    g = coarse_grid(0.01**1.1)
    assert g.n_cells == 317 and abs(g.dx - 0.01**1.1) < 1e-5


def test_nl2l_examples():
    g = make_grid(-1, 1, 0.02)
    u = project_function(lambda x: 0.2 + 0.25 * (np.abs(x) < 0.5), g)
    curve = nl2l_solutions_study(u, [0.4, 0.2, 0.1, 0.05, 0.02, 0.01])
    gaps = [c[1] for c in curve]
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] == 0.0 and gaps[-2] == 0.0
    flat = nl2l_solutions_study(CellField(g, np.full(g.n_cells, 0.4)), [0.4, 0.1])
    assert all(c[1] == 0.0 for c in flat)


def test_spec_validation():
    with pytest.raises(ValueError):
        StudySpec("nope")
    with pytest.raises(ValueError):
        StudySpec("gamma_minimizers", H_list=(0.1, 0.2, 0.05))
    with pytest.raises(ValueError):
        StudySpec("double_limit", coupling="cube")


FAST = OptimizerConfig(max_iterations=15)


def test_small_grid_convergence_study():
    spec = StudySpec("grid_convergence_local", dx_list=(0.08,), optimizer=FAST)
    res = run_study(spec)
    assert len(res.rows) == 1 and not res.failed
    row = res.rows[0]
    assert set(COLUMNS) >= {"dx", "H", "l1_relative_error", "objective_value", "iterations",
                            "first_order_optimality"}
    assert row.status == "ok" and math.isfinite(row.tv)
    header, rows = res.curves["fig_local_minimizers"]
    assert header[:2] == ["x", "U_o_d"] and len(rows) == 25
    assert all(0.0 <= r[2] <= 1.0 for r in rows)


def test_better_start_does_not_end_worse():
    base = dict(kind="grid_convergence_local", dx_list=(0.08,), optimizer=FAST)
    from_step = run_study(StudySpec(**base)).rows[0]
    from_datum = run_study(StudySpec(start="bump", **base)).rows[0]
    assert from_datum.objective_value <= from_step.objective_value


def test_small_gamma_study_ends_at_zero():
    spec = StudySpec("gamma_minimizers", dx=0.08, H_list=(0.32, 0.16, 0.08, 0.04), optimizer=FAST)
    res = run_study(spec)
    curve = res.curves["fig_discrete_gamma_conv"][1]
    assert curve[-1][1] == 0.0 and curve[-2][1] == 0.0
    assert len(res.rows) == 5


def test_nl2l_study_kind():
    res = run_study(StudySpec("nl2l_solutions", dx=0.02, H_list=(0.2, 0.02)))
    assert res.rows == [] and res.curves["fig_nl2l_solutions"][1][-1][1] == 0.0


def test_failed_rows_are_marked():
    cell = _Cell(0.08, 0.1, 0.25, "local", None, "step", "missing", "greenshields", FAST, AdmissibleSpec())
    row, u, rep = _solve_cell(cell)
    assert row.status.startswith("failed") and u is None and rep is None
    assert math.isnan(row.l1_relative_error)
