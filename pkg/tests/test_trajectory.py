import numpy as np
import pytest

from src.models.plans import OffloadDecision, TrajectoryPlan
from src.models.reports import Tolerances
from src.physics.costs import CostModel
from src.services.trajectory_service import gradient_mismatch, linearize_sp, objective_gradient, solve_sp
from tests.conftest import make_scenario


def _straight(scenario) -> TrajectoryPlan:
    return TrajectoryPlan.straight_line(scenario.start_xy(), scenario.end_xy(), scenario.num_slots)


def _all_on_uav(num_gus: int, num_uavs: int, num_slots: int) -> OffloadDecision:
    y = np.zeros((num_gus, num_uavs, num_slots))
    y[:, 0, :] = 1
    return OffloadDecision.from_yz(y, np.zeros_like(y))


def test_local_decision_leaves_trajectory_alone(tiny_scenario):
    model = CostModel(tiny_scenario)
    traj = _straight(tiny_scenario)
    dec = OffloadDecision.zeros(model.num_gus, model.num_uavs, model.num_slots)
    sizes = np.full(model.num_gus, 1e6)

    sp = solve_sp(dec, sizes, traj, model)

    assert sp.iterations == 1
    assert np.array_equal(sp.trajectory.waypoints, traj.waypoints)
    assert sp.value == pytest.approx(model.total_delay(dec, traj, sizes))
    assert not sp.collapsed


def test_serving_uav_moves_toward_its_user():
    scenario = make_scenario(3, gu_xy=[(500.0, 800.0)], I=1, J=1, N=4)
    model = CostModel(scenario)
    traj = _straight(scenario)
    dec = _all_on_uav(1, 1, 4)
    sizes = np.array([1e6])
    start_value = model.total_delay(dec, traj, sizes)

    sp = solve_sp(dec, sizes, traj, model)

    assert sp.value < start_value
    assert sp.merit_history == sorted(sp.merit_history, reverse=True)
    gu = np.array([500.0, 800.0])
    before = np.linalg.norm(traj.waypoints[0, 1:-1] - gu, axis=1)
    after = np.linalg.norm(sp.trajectory.waypoints[0, 1:-1] - gu, axis=1)
    assert after.sum() < before.sum()
    # Endpoints are fixed and every slot stays within reach.
    assert np.array_equal(sp.trajectory.waypoints[:, [0, -1]], traj.waypoints[:, [0, -1]])
    assert np.all(sp.trajectory.steps() <= model.speed[0] * model.slot_len + 1e-6)


def test_analytic_gradient_matches_finite_differences():
    scenario = make_scenario(5, gu_xy=[(450.0, 650.0), (560.0, 380.0)], I=2, J=1, N=4)
    model = CostModel(scenario)
    traj = _straight(scenario)
    y = np.zeros((2, 1, 4))
    z = np.zeros((2, 1, 4))
    y[0, 0, :] = 1
    z[1, 0, :2] = 1
    dec = OffloadDecision.from_yz(y, z)
    sizes = np.array([8e5, 1.2e6])

    assert np.abs(objective_gradient(model, dec, traj, sizes)).max() > 0.0
    assert gradient_mismatch(model, dec, traj, sizes) < 1e-4


def test_linear_model_is_exact_at_reference(tiny_scenario):
    model = CostModel(tiny_scenario)
    traj = _straight(tiny_scenario)
    dec = _all_on_uav(model.num_gus, model.num_uavs, model.num_slots)
    sizes = np.full(model.num_gus, 1e6)
    tol = Tolerances()

    sub = linearize_sp(traj, dec, sizes, model, trust_radius=10.0, penalty=tol.penalty)

    assert sub.lp.offset == pytest.approx(model.total_delay(dec, traj, sizes))
    assert sub.free_index.shape == (1, 1, 2)
    assert sub.model_merit_at_reference(tol.penalty) == pytest.approx(sub.lp.offset)
    assert set(sub.uav_rows) == {0}
