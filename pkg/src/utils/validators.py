"""Scenario validation and post-hoc solution audits.

Both functions report violations as data (a list of messages); an empty list means ok.
"""
from typing import List, Optional

import numpy as np

from src.models.plans import OffloadDecision, TrajectoryPlan
from src.models.reports import SolveReport
from src.models.scenario import Position3D, Scenario
from src.models.uncertainty import AmbiguitySet, mean_sizes
from src.physics.costs import CostModel
from src.physics.energy import propulsion_power
from src.utils.exceptions import DomainError, ZeroRateError

AUDIT_RTOL = 1e-6


def _inside(pos: Position3D, scenario: Scenario) -> bool:
    return 0.0 <= pos.x <= scenario.area_x and 0.0 <= pos.y <= scenario.area_y


def validate_scenario(scenario: Scenario) -> List[str]:
    """
    Check the scenario invariants that the field validators cannot see.

    Args:
        scenario: Scenario to check

    Returns:
        One message per violated invariant (empty when the scenario is ok)
    """
    violations: List[str] = []
    for i, gu in enumerate(scenario.gus):
        if not _inside(gu.position, scenario):
            violations.append(f"GU {i} outside area")
    for j, uav in enumerate(scenario.uavs):
        if not _inside(uav.start_position, scenario):
            violations.append(f"UAV {j} start outside area")
        if not _inside(uav.end_position, scenario):
            violations.append(f"UAV {j} end outside area")
        span = float(np.linalg.norm(uav.end_position.xy() - uav.start_position.xy()))
        reach = scenario.num_slots * uav.cruise_speed * scenario.time.slot_len
        if span > reach:
            violations.append(f"UAV {j} cannot reach its end position ({span:.1f} m > {reach:.1f} m)")
        try:
            propulsion_power(uav.cruise_speed, scenario.propulsion)
        except DomainError as e:
            violations.append(f"UAV {j} propulsion: {e}")

    starts = scenario.start_xy()
    ends = scenario.end_xy()
    for j in range(scenario.num_uavs):
        for jj in range(j + 1, scenario.num_uavs):
            for label, points in (("start", starts), ("end", ends)):
                gap = float(np.linalg.norm(points[j] - points[jj]))
                if gap < scenario.min_separation:
                    violations.append(
                        f"separation: UAVs {j} and {jj} {label} {gap:.2f} m apart (< {scenario.min_separation} m)"
                    )
    return violations


def audit_trajectory(traj: TrajectoryPlan, scenario: Scenario, rtol: float = AUDIT_RTOL) -> List[str]:
    """Exact-norm check of area, speed, separation and fixed endpoints."""
    violations: List[str] = []
    wp = traj.waypoints
    if wp.shape != (scenario.num_uavs, scenario.num_slots + 1, 2):
        return [f"trajectory shape {wp.shape} does not match the scenario"]
    if not np.allclose(wp[:, 0], scenario.start_xy()) or not np.allclose(wp[:, -1], scenario.end_xy()):
        violations.append("trajectory endpoints differ from the fixed start/end positions")
    tol_x = rtol * scenario.area_x
    tol_y = rtol * scenario.area_y
    if np.any(wp[..., 0] < -tol_x) or np.any(wp[..., 0] > scenario.area_x + tol_x):
        violations.append("waypoint outside area (x)")
    if np.any(wp[..., 1] < -tol_y) or np.any(wp[..., 1] > scenario.area_y + tol_y):
        violations.append("waypoint outside area (y)")
    steps = traj.steps()
    for j, uav in enumerate(scenario.uavs):
        limit = uav.cruise_speed * scenario.time.slot_len * (1.0 + rtol)
        for n in np.flatnonzero(steps[j] > limit):
            violations.append(f"speed: UAV {j} slot {n + 1} moves {steps[j, n]:.3f} m")
    for j in range(scenario.num_uavs):
        for jj in range(j + 1, scenario.num_uavs):
            gap = np.linalg.norm(wp[j] - wp[jj], axis=1)
            for n in np.flatnonzero(gap < scenario.min_separation * (1.0 - rtol)):
                violations.append(f"separation: UAVs {j} and {jj} {gap[n]:.3f} m apart at waypoint {n}")
    return violations


def audit_decision(dec: OffloadDecision, scenario: Scenario) -> List[str]:
    """Exact check of the decision structure and quotas."""
    violations: List[str] = []
    if dec.shape != (scenario.num_gus, scenario.num_uavs, scenario.num_slots):
        return [f"decision shape {dec.shape} does not match the scenario"]
    if not np.array_equal(dec.x, dec.y + dec.z):
        violations.append("x differs from y + z")
    for i, n in zip(*np.nonzero(dec.x.sum(axis=1) > 1)):
        violations.append(f"GU {i} slot {n + 1} collected by more than one UAV")
    for j, uav in enumerate(scenario.uavs):
        for n in np.flatnonzero(dec.y[:, j, :].sum(axis=0) > uav.quota):
            violations.append(f"UAV {j} computes more than {uav.quota} tasks in slot {n + 1}")
    for n in np.flatnonzero(dec.z.sum(axis=(0, 1)) > scenario.hap.quota):
        violations.append(f"HAP receives more than {scenario.hap.quota} tasks in slot {n + 1}")
    return violations


def audit_solution(
    report: SolveReport,
    scenario: Scenario,
    amb: AmbiguitySet,
    rtol: float = AUDIT_RTOL,
    model: Optional[CostModel] = None
) -> List[str]:
    """
    Re-validate an emitted solution: trajectory and decision constraints exactly, and the
    expectation constraints under the report's distributions.

    Args:
        report: Solve report to audit
        scenario: Scenario it was solved on
        amb: Ambiguity set (for the sample space)
        rtol: Relative tolerance
        model: Optional prebuilt cost model

    Returns:
        One message per violation (empty when the solution passes)
    """
    violations = audit_trajectory(report.trajectories, scenario, rtol)
    violations += audit_decision(report.decisions, scenario)
    if violations:
        return violations

    model = model or CostModel(scenario)
    sizes = mean_sizes(report.worst_dists, amb.space, scenario.num_slots)
    try:
        ev = model.evaluate(report.decisions, report.trajectories, sizes)
    except ZeroRateError as e:
        return [str(e)]
    tau = scenario.time.slot_len
    for i, n in zip(*np.nonzero(ev.g_tau > rtol * tau)):
        violations.append(f"expected delay of GU {i} slot {n + 1} exceeds the slot length")
    for i in np.flatnonzero(ev.g_gu > rtol * model.budget_gu):
        violations.append(f"expected energy of GU {i} exceeds its budget")
    for j in np.flatnonzero(ev.g_uav > rtol * model.budget_uav):
        violations.append(f"expected energy of UAV {j} exceeds its budget")
    if ev.g_hap > rtol * model.budget_hap:
        violations.append("expected HAP energy exceeds its budget")
    return violations
