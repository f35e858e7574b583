import numpy as np
import pytest

from elcontrol.grid import CellField, l1_distance, make_grid, project_function
from elcontrol.objectives import (
    Objective,
    ObjectiveError,
    ObjectiveSpec,
    ObjectiveTerm,
    ReferenceSolution,
    bv_regularization,
    distributed_tracking,
    evaluate,
    final_time_tracking,
    sample_reference,
    tracking_objective,
)
from elcontrol.scheme import SchemeConfig, SpeedLaw, run

from oracles import bump, u_init

pytestmark = pytest.mark.filterwarnings("ignore::elcontrol.scheme.CFLWarning")

SPEED = SpeedLaw()


@pytest.fixture(scope="module")
def coarse_ref():
    g = make_grid(-1, 1, 0.02)
    cfg = SchemeConfig(dx=0.02, dt=0.01, T=0.25)
    return ReferenceSolution(run(project_function(bump, g), SPEED, cfg))


def test_sample_reference_lookup(coarse_ref):
    tr = coarse_ref.trajectory
    g = tr.grid
    assert sample_reference(coarse_ref, tr.times[3], g.midpoints[7]) == tr.values[3, 7]
    # left-constant between stored times
    assert sample_reference(coarse_ref, tr.times[3] + 0.004, g.midpoints[7]) == tr.values[3, 7]
    with pytest.raises(ObjectiveError):
        sample_reference(coarse_ref, 1.0, 0.0)
    with pytest.raises(ObjectiveError):
        sample_reference(coarse_ref, 0.0, 3.0)


def test_sampling_is_exact_on_divisible_grids():
    # dx = 5 dx^d and dt = 5 dt^d: every coarse query lands on a fine node
    fine = make_grid(-1, 1, 0.002)
    ref = ReferenceSolution(run(project_function(bump, fine), SPEED, SchemeConfig(0.002, 0.001, 0.05)))
    coarse = make_grid(-1, 1, 0.01)
    for m in range(0, 11):
        t = m * 0.005
        for x in coarse.midpoints[::17]:
            j = int(np.floor((x + 1) / 0.002))
            assert sample_reference(ref, t, x) == ref.trajectory.values[5 * m, j]


def test_self_tracking_is_zero(coarse_ref):
    assert distributed_tracking(coarse_ref.trajectory, coarse_ref, (-1, 1)) == 0.0
    obj = tracking_objective(coarse_ref, coarse_ref.grid, coarse_ref.trajectory.config)
    assert obj(coarse_ref.initial) <= 1e-12


def test_constant_offset_counts_terms():
    g = make_grid(-1, 1, 0.1)
    cfg = SchemeConfig(dx=0.1, dt=0.05, T=0.25)
    ref = ReferenceSolution(run(CellField(g, np.full(20, 0.3)), SPEED, cfg))
    c = 0.05
    traj = run(CellField(g, np.full(20, 0.3 + c)), SPEED, cfg)
    M = cfg.n_steps
    assert distributed_tracking(traj, ref, (-1, 1)) == pytest.approx(c * 2 * (M + 1) * cfg.dt, rel=1e-12)


def test_partial_trajectory_rejected(coarse_ref):
    cfg = SchemeConfig(dx=0.02, dt=0.01, T=0.25, store_every=5)
    traj = run(coarse_ref.initial, SPEED, cfg)
    with pytest.raises(ObjectiveError):
        distributed_tracking(traj, coarse_ref, (-1, 1))
    with pytest.raises(ObjectiveError):
        ReferenceSolution(traj)


def test_final_time_tracking_examples():
    g = make_grid(-1, 1, 0.1)
    a = project_function(bump, g)
    assert final_time_tracking(a, a) == 0.0
    b = a.with_values(a.values + 0.1)
    assert final_time_tracking(a, b, p=2, window=(-1, 1)) == pytest.approx(2 * 0.01, rel=1e-12)
    c = project_function(u_init, g)
    assert final_time_tracking(a, c, 1, (-0.5, 0.5)) == l1_distance(a, c, (-0.5, 0.5))
    with pytest.raises(ValueError):
        final_time_tracking(a, CellField(make_grid(-1, 1, 0.2), np.zeros(10)))


def test_bv_regularization_delegates():
    g = make_grid(0, 1, 0.25)
    assert bv_regularization(CellField(g, [0, 1, 0, 1])) == 3.0


def test_term_validation():
    with pytest.raises(ObjectiveError):
        ObjectiveTerm("distributed_tracking")
    with pytest.raises(ObjectiveError):
        ObjectiveTerm("nope")
    with pytest.raises(ObjectiveError):
        ObjectiveSpec([])


def test_zero_weights_give_zero(coarse_ref):
    spec = ObjectiveSpec([ObjectiveTerm("distributed_tracking", 0.0, reference=coarse_ref),
                          ObjectiveTerm("bv_regularization", 0.0)])
    u = project_function(u_init, coarse_ref.grid)
    assert evaluate(spec, u, coarse_ref.trajectory.config) == 0.0


def test_start_objective_positive(coarse_ref):
    u = project_function(u_init, coarse_ref.grid)
    obj = tracking_objective(coarse_ref, u.grid, coarse_ref.trajectory.config)
    v = obj(u)
    assert v > 0 and obj.n_evaluations == 1
    assert obj(u) == v


def test_batch_matches_single(coarse_ref):
    rng = np.random.default_rng(3)
    U = rng.uniform(0, 1, size=(5, coarse_ref.grid.n_cells))
    obj = tracking_objective(coarse_ref, coarse_ref.grid, coarse_ref.trajectory.config)
    b = obj.batch(U)
    for i in range(5):
        assert obj(U[i]) == b[i]


def test_nonlocal_objective_equals_local_for_small_H(coarse_ref):
    g = coarse_ref.grid
    rng = np.random.default_rng(4)
    loc = tracking_objective(coarse_ref, g, SchemeConfig(0.02, 0.01, 0.25))
    for H in (0.02, 0.01):
        nl = tracking_objective(coarse_ref, g, SchemeConfig(0.02, 0.01, 0.25, H=H))
        for _ in range(3):
            u = rng.uniform(0, 1, g.n_cells)
            assert nl(u) == loc(u)


def test_objective_l1_lipschitz(coarse_ref):
    g = coarse_ref.grid
    obj = tracking_objective(coarse_ref, g, coarse_ref.trajectory.config)
    rng = np.random.default_rng(5)
    ratios = []
    for _ in range(10):
        a = rng.uniform(0, 1, g.n_cells)
        b = np.clip(a + rng.normal(0, 0.05, g.n_cells), 0, 1)
        ratios.append(abs(obj(a) - obj(b)) / (np.sum(np.abs(a - b)) * g.dx))
    # the tracking functional is at most T-weighted L1 stability of the scheme
    assert np.isfinite(max(ratios)) and max(ratios) <= 2.0


def test_objective_nonnegative(coarse_ref):
    g = coarse_ref.grid
    spec = ObjectiveSpec([ObjectiveTerm("distributed_tracking", 1.0, reference=coarse_ref),
                          ObjectiveTerm("final_time_tracking", 0.5, reference=coarse_ref, p=2.0),
                          ObjectiveTerm("bv_regularization", 1e-3)])
    obj = Objective(spec, g, coarse_ref.trajectory.config)
    rng = np.random.default_rng(6)
    assert np.all(obj.batch(rng.uniform(0, 1, (8, g.n_cells))) >= 0)


def test_grid_mismatch_rejected(coarse_ref):
    with pytest.raises(ObjectiveError):
        tracking_objective(coarse_ref, make_grid(-1, 1, 0.04), SchemeConfig(0.02, 0.01, 0.25))
