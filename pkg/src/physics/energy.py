"""Rotary-wing propulsion power and per-slot flight energy."""
import logging

import numpy as np

from src.models.plans import TrajectoryPlan
from src.models.scenario import PropulsionModel, PropulsionParams, Scenario
from src.utils.exceptions import DomainError, SpeedLimitError

logger = logging.getLogger(__name__)

_SPEED_TOL = 1e-9
_RADICAND_TOL = 1e-12


def blade_profile_power(v: float, pp: PropulsionParams) -> float:
    return pp.blade_power * (1.0 + 3.0 * v ** 2 / pp.tip_speed ** 2)


def parasite_power(v: float, pp: PropulsionParams) -> float:
    return 0.5 * pp.drag_ratio * pp.air_density * pp.rotor_solidity * pp.rotor_area * v ** 3


def induced_power(v: float, pp: PropulsionParams) -> float:
    """
    Induced term. The printed model divides v^4 by 4*v0^2 inside the root; the
    standard model by 4*v0^4.

    Raises:
        DomainError: If the outer radicand is negative beyond round-off (the printed
            model with a small mean rotor velocity at high speed)
    """
    v0 = pp.mean_rotor_velocity
    denom = 4.0 * v0 ** 2 if pp.model is PropulsionModel.PRINTED else 4.0 * v0 ** 4
    inner = np.sqrt(1.0 + v ** 4 / denom) - v ** 2 / (2.0 * v0 ** 2)
    if inner < -_RADICAND_TOL:
        raise DomainError(
            f"Induced power undefined at v={v:.3g} m/s with v0={v0:.3g} m/s (radicand {inner:.3g})"
        )
    if inner < 0.0:
        logger.debug(f"induced-power radicand {inner:.3g} clamped to zero at v={v:.3g} m/s")
        inner = 0.0
    return pp.induced_power * float(np.sqrt(inner))


def propulsion_power(v: float, pp: PropulsionParams) -> float:
    """
    Propulsion power of a rotary-wing UAV at speed ``v`` (m/s), in watts.

    Raises:
        DomainError: If ``v`` is negative
    """
    if v < 0:
        raise DomainError("Speed must be nonnegative")
    return blade_profile_power(v, pp) + parasite_power(v, pp) + induced_power(v, pp)


def hover_power(pp: PropulsionParams) -> float:
    return pp.blade_power + pp.induced_power


def flight_energy_of_step(step: np.ndarray, speed: float, slot_len: float, pp: PropulsionParams) -> np.ndarray:
    """Energy of slots whose flown distances are ``step`` (fly at ``speed``, hover the rest)."""
    fly = np.asarray(step, dtype=float) / speed
    return propulsion_power(speed, pp) * fly + hover_power(pp) * (slot_len - fly)


def flight_energy(j: int, n: int, traj: TrajectoryPlan, scenario: Scenario) -> float:
    """
    Propulsion energy of UAV ``j`` in slot ``n`` (moving from waypoint n-1 to n).

    Args:
        j: UAV index
        n: Slot number, 1..N
        traj: Trajectory plan
        scenario: Scenario

    Raises:
        SpeedLimitError: If the step needs longer than one slot
    """
    if n < 1 or n > traj.num_slots:
        raise DomainError(f"Slot {n} outside 1..{traj.num_slots}")
    uav = scenario.uavs[j]
    tau = scenario.time.slot_len
    step = float(np.linalg.norm(traj.waypoints[j, n] - traj.waypoints[j, n - 1]))
    if step / uav.cruise_speed > tau * (1.0 + _SPEED_TOL):
        raise SpeedLimitError(f"UAV {j} slot {n}: step {step:.3f} m exceeds {uav.cruise_speed * tau:.3f} m")
    return float(flight_energy_of_step(step, uav.cruise_speed, tau, scenario.propulsion))
