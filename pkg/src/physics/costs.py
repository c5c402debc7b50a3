"""Delay and energy accounting.

Every delay and transmission/compute energy is proportional to the task size, so the
vectorized :class:`CostModel` works with per-bit quantities and multiplies by sizes at
the end. Slot ``n`` of the decision tensors (zero-based) is served from waypoint ``n + 1``.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.models.plans import OffloadDecision, TrajectoryPlan
from src.models.reports import SlotCost
from src.models.scenario import Position3D, Scenario
from src.physics.channel import (
    air_to_ground_rate_and_slope,
    gu_uav_gain,
    hap_rate_and_slope,
    rate_gu_uav,
    rate_uav_hap,
)
from src.physics.energy import flight_energy, hover_power, propulsion_power
from src.utils.exceptions import DomainError, ZeroRateError

_ZERO_STEP = 1e-12


@dataclass(frozen=True)
class RateField:
    """Link rates for one trajectory and the gradients of their reciprocals."""

    rate_ug: np.ndarray       # (I, J, N)
    rate_uh: np.ndarray       # (J, N)
    inv_ug: np.ndarray        # (I, J, N), 0 where the rate is 0
    inv_uh: np.ndarray        # (J, N)
    grad_inv_ug: Optional[np.ndarray] = None  # (I, J, N, 2)
    grad_inv_uh: Optional[np.ndarray] = None  # (J, N, 2)


@dataclass(frozen=True)
class RateBounds:
    """Reciprocal-rate bounds over every admissible trajectory (lo: best link, hi: worst)."""

    inv_ug_lo: np.ndarray     # (I, J, N)
    inv_ug_hi: np.ndarray     # (I, J, N)
    inv_uh_lo: np.ndarray     # (J, N)
    inv_uh_hi: np.ndarray     # (J, N)


@dataclass(frozen=True)
class Evaluation:
    """Objective and expectation-constraint values at mean task sizes."""

    unit_delay: np.ndarray    # (I, N) seconds per bit
    objective: float          # sum_i,n sbar_i * unit_delay
    g_tau: np.ndarray         # (I, N) expected delay minus slot length
    g_gu: np.ndarray          # (I,) expected GU energy minus budget
    g_uav: np.ndarray         # (J,) expected UAV energy minus budget
    g_hap: float              # expected HAP energy minus budget
    flight: np.ndarray        # (J, N) propulsion energy per slot

    def violation(self) -> float:
        return float(
            np.clip(self.g_tau, 0, None).sum()
            + np.clip(self.g_gu, 0, None).sum()
            + np.clip(self.g_uav, 0, None).sum()
        )

    def merit(self, penalty: float) -> float:
        """Objective plus penalized violation of the trajectory-dependent constraints."""
        return self.objective + penalty * self.violation()


class CostModel:
    """Array view of a scenario for fast cost, constraint and gradient evaluation."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        gus, uavs, hap = scenario.gus, scenario.uavs, scenario.hap
        self.num_gus = scenario.num_gus
        self.num_uavs = scenario.num_uavs
        self.num_slots = scenario.num_slots
        self.slot_len = scenario.time.slot_len

        self.gu_xy = scenario.gu_xy()
        self.cycles = np.array([gu.cpu_cycles_per_bit for gu in gus])
        self.f_gu = np.array([gu.local_cpu_rate for gu in gus])
        self.eta_gu = np.array([gu.capacitance for gu in gus])
        self.p_gu = np.array([gu.tx_power for gu in gus])
        self.budget_gu = np.array([gu.energy_budget for gu in gus])

        self.f_uav = np.array([uav.cpu_rate for uav in uavs])
        self.eta_uav = np.array([uav.capacitance for uav in uavs])
        self.p_uav = np.array([uav.tx_power for uav in uavs])
        self.budget_uav = np.array([uav.energy_budget for uav in uavs])
        self.speed = np.array([uav.cruise_speed for uav in uavs])
        self.quota_uav = np.array([uav.quota for uav in uavs])
        self.altitude = scenario.uav_altitude

        self.hap_xy = hap.position.xy()
        self.hap_dz = hap.position.z - self.altitude
        self.f_hap = hap.cpu_rate
        self.eta_hap = hap.capacitance
        self.budget_hap = hap.energy_budget
        self.quota_hap = hap.quota

        pp = scenario.propulsion
        self.p_hover = hover_power(pp)
        self.p_fly = np.array([propulsion_power(v, pp) for v in self.speed])
        # Extra energy per meter flown over hovering.
        self.fly_slope = (self.p_fly - self.p_hover) / self.speed

        # Per-bit building blocks, broadcast to (I, J) where they depend on both.
        self.local_delay = self.cycles / self.f_gu                               # (I,)
        self.local_energy = self.eta_gu * self.cycles * self.f_gu ** 2           # (I,)
        self.uav_delay = self.cycles[:, None] / self.f_uav[None, :]              # (I, J)
        self.uav_energy = self.eta_uav[None, :] * self.cycles[:, None] * self.f_uav[None, :] ** 2
        self.hap_delay = self.cycles / self.f_hap                                # (I,)
        self.hap_energy = self.eta_hap * self.cycles * self.f_hap ** 2           # (I,)

    # ------------------------------------------------------------------ rates

    def rates(self, traj: TrajectoryPlan, with_gradient: bool = False) -> RateField:
        pos = traj.slot_positions()                                   # (J, N, 2)
        diff = pos[None, :, :, :] - self.gu_xy[:, None, None, :]      # (I, J, N, 2)
        horizontal = np.linalg.norm(diff, axis=-1)
        rate_ug, slope_ug = air_to_ground_rate_and_slope(
            horizontal, self.altitude, self.scenario.channel, self.p_gu[:, None, None]
        )

        hap_diff = pos - self.hap_xy[None, None, :]                   # (J, N, 2)
        distance = np.sqrt(np.sum(hap_diff ** 2, axis=-1) + self.hap_dz ** 2)
        rate_uh, slope_uh = hap_rate_and_slope(distance, self.scenario.channel, self.p_uav[:, None])

        inv_ug = _safe_inverse(rate_ug)
        inv_uh = _safe_inverse(rate_uh)
        if not with_gradient:
            return RateField(rate_ug, rate_uh, inv_ug, inv_uh)

        # The LoS term has a kink straight above a GU; use the zero subgradient there.
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(horizontal[..., None] > _ZERO_STEP, diff / horizontal[..., None], 0.0)
        grad_ug = -(slope_ug * inv_ug ** 2)[..., None] * unit
        grad_uh = -(slope_uh * inv_uh ** 2)[..., None] * (hap_diff / distance[..., None])
        return RateField(rate_ug, rate_uh, inv_ug, inv_uh, grad_ug, grad_uh)

    def reach_distances(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Bounds on the horizontal distance from each of ``points`` (P, 2) to UAV j's
        slot-n position over every admissible trajectory.

        The position lies within ``w * v * tau`` of the start and ``(N - w) * v * tau`` of
        the end (``w = n + 1``) and inside the area.

        Returns:
            (closest, farthest), each shaped (P, J, N)
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        area = np.array([self.scenario.area_x, self.scenario.area_y])
        waypoint = np.arange(1, self.num_slots + 1)
        step = (self.speed * self.slot_len)[:, None]
        from_start = step * waypoint[None, :]                                # (J, N)
        from_end = step * (self.num_slots - waypoint)[None, :]

        d_start = np.linalg.norm(points[:, None, :] - self.scenario.start_xy()[None], axis=-1)[..., None]
        d_end = np.linalg.norm(points[:, None, :] - self.scenario.end_xy()[None], axis=-1)[..., None]
        outside = np.linalg.norm(points - np.clip(points, 0.0, area), axis=-1)[:, None, None]
        corners = np.array([[0.0, 0.0], [area[0], 0.0], [0.0, area[1]], area])
        corner = np.linalg.norm(points[:, None, :] - corners[None], axis=-1).max(axis=1)[:, None, None]

        closest = np.maximum(np.maximum(d_start - from_start[None], d_end - from_end[None]), outside)
        farthest = np.minimum(np.minimum(d_start + from_start[None], d_end + from_end[None]), corner)
        return np.minimum(closest, farthest), farthest

    def reach_rate_bounds(self) -> RateBounds:
        """Best and worst link rates over every admissible trajectory, as reciprocals."""
        ch = self.scenario.channel
        near, far = self.reach_distances(self.gu_xy)
        best_ug, _ = air_to_ground_rate_and_slope(near, self.altitude, ch, self.p_gu[:, None, None])
        worst_ug, _ = air_to_ground_rate_and_slope(far, self.altitude, ch, self.p_gu[:, None, None])

        near_h, far_h = self.reach_distances(self.hap_xy[None, :])
        best_uh, _ = hap_rate_and_slope(np.sqrt(near_h[0] ** 2 + self.hap_dz ** 2), ch, self.p_uav[:, None])
        worst_uh, _ = hap_rate_and_slope(np.sqrt(far_h[0] ** 2 + self.hap_dz ** 2), ch, self.p_uav[:, None])
        return RateBounds(
            inv_ug_lo=_safe_inverse(best_ug),
            inv_ug_hi=_safe_inverse(worst_ug),
            inv_uh_lo=_safe_inverse(best_uh),
            inv_uh_hi=_safe_inverse(worst_uh),
        )

    # --------------------------------------------------------------- per bit

    def unit_delay(self, dec: OffloadDecision, field: RateField) -> np.ndarray:
        """(I, N) delay per bit of each GU task part."""
        x, y, z = dec.x, dec.y, dec.z
        _check_rates(x, field.rate_ug, "GU-UAV")
        _check_rates(z, field.rate_uh[None, :, :], "UAV-HAP")
        local = (1 - x.sum(axis=1)) * self.local_delay[:, None]
        offload = (
            x * field.inv_ug
            + z * field.inv_uh[None, :, :]
            + y * self.uav_delay[:, :, None]
            + z * self.hap_delay[:, None, None]
        ).sum(axis=1)
        return local + offload

    def unit_gu_energy(self, dec: OffloadDecision, field: RateField) -> np.ndarray:
        """(I, N) GU energy per bit (local compute plus uplink)."""
        x = dec.x
        local = (1 - x.sum(axis=1)) * self.local_energy[:, None]
        uplink = self.p_gu[:, None] * (x * field.inv_ug).sum(axis=1)
        return local + uplink

    def unit_uav_compute_energy(self, dec: OffloadDecision) -> np.ndarray:
        """(I, J, N) UAV compute energy per bit."""
        return dec.y * self.uav_energy[:, :, None]

    def unit_uav_relay_energy(self, dec: OffloadDecision, field: RateField) -> np.ndarray:
        """(I, J, N) UAV relay energy per bit."""
        return dec.z * (self.p_uav[:, None] * field.inv_uh)[None, :, :]

    def unit_hap_energy(self, dec: OffloadDecision) -> np.ndarray:
        """(I, J, N) HAP compute energy per bit."""
        return dec.z * self.hap_energy[:, None, None]

    # ---------------------------------------------------------------- flight

    def flight(self, traj: TrajectoryPlan) -> np.ndarray:
        """(J, N) propulsion energy per slot."""
        steps = traj.steps()
        return self.p_hover * self.slot_len + self.fly_slope[:, None] * steps

    def flight_gradient(self, traj: TrajectoryPlan) -> np.ndarray:
        """
        (J, N, 2) derivative of slot-n flight energy with respect to waypoint n; the
        derivative with respect to waypoint n-1 is its negative.
        """
        delta = np.diff(traj.waypoints, axis=1)
        length = np.linalg.norm(delta, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(length[..., None] > _ZERO_STEP, delta / length[..., None], 0.0)
        return self.fly_slope[:, None, None] * unit

    def min_flight_energy(self) -> np.ndarray:
        """(J,) lowest total flight energy any admissible trajectory can have."""
        straight = np.linalg.norm(self.scenario.end_xy() - self.scenario.start_xy(), axis=1)
        longest = self.speed * self.slot_len * self.num_slots
        hover = self.p_hover * self.slot_len * self.num_slots
        return hover + np.minimum(self.fly_slope * straight, self.fly_slope * longest)

    # ------------------------------------------------------------ aggregates

    def evaluate(
        self,
        dec: OffloadDecision,
        traj: TrajectoryPlan,
        sizes: np.ndarray,
        field: Optional[RateField] = None
    ) -> Evaluation:
        """
        Objective and constraint values for per-GU mean sizes ``sizes`` (I,) or
        per-task-part sizes (I, N).
        """
        field = field or self.rates(traj)
        sizes = np.asarray(sizes, dtype=float)
        weights = sizes[:, None] if sizes.ndim == 1 else sizes
        weights = np.broadcast_to(weights, (self.num_gus, self.num_slots))

        delay = self.unit_delay(dec, field)
        gu_energy = (weights * self.unit_gu_energy(dec, field)).sum(axis=1)
        uav_bits = self.unit_uav_compute_energy(dec) + self.unit_uav_relay_energy(dec, field)
        flight = self.flight(traj)
        uav_energy = (weights[:, None, :] * uav_bits).sum(axis=(0, 2)) + flight.sum(axis=1)
        hap_energy = float((weights[:, None, :] * self.unit_hap_energy(dec)).sum())
        return Evaluation(
            unit_delay=delay,
            objective=float((weights * delay).sum()),
            g_tau=weights * delay - self.slot_len,
            g_gu=gu_energy - self.budget_gu,
            g_uav=uav_energy - self.budget_uav,
            g_hap=hap_energy - self.budget_hap,
            flight=flight,
        )

    def total_delay(self, dec: OffloadDecision, traj: TrajectoryPlan, sizes: np.ndarray) -> float:
        return self.evaluate(dec, traj, sizes).objective


def _safe_inverse(rate: np.ndarray) -> np.ndarray:
    out = np.zeros_like(rate, dtype=float)
    np.divide(1.0, rate, out=out, where=rate > 0)
    return out


def _check_rates(indicator: np.ndarray, rate: np.ndarray, link: str) -> None:
    bad = (indicator > 0) & ~(np.broadcast_to(rate, indicator.shape) > 0)
    if bad.any():
        i, j, n = (int(v) for v in np.argwhere(bad)[0])
        raise ZeroRateError(f"{link} rate is zero for active link (GU {i}, UAV {j}, slot {n + 1})")


def _uav_position(traj: TrajectoryPlan, j: int, n: int, altitude: float) -> Position3D:
    x, y = traj.waypoints[j, n]
    return Position3D(x=float(x), y=float(y), z=altitude)


def slot_cost(
    i: int,
    n: int,
    s_k: float,
    dec: OffloadDecision,
    traj: TrajectoryPlan,
    scenario: Scenario
) -> SlotCost:
    """
    Delay and energies of GU ``i``'s task part in slot ``n``.

    Args:
        i: GU index
        n: Slot number, 1..N (served from waypoint n)
        s_k: Task-part size in bits
        dec: Offloading decision
        traj: Trajectory plan
        scenario: Scenario

    Returns:
        SlotCost with every component in SI units

    Raises:
        ZeroRateError: If a link in use has zero rate
    """
    if n < 1 or n > scenario.num_slots:
        raise DomainError(f"Slot {n} outside 1..{scenario.num_slots}")
    gu = scenario.gus[i]
    hap = scenario.hap
    slot = n - 1
    c = gu.cpu_cycles_per_bit

    offloaded = int(dec.x[i, :, slot].sum())
    delay = (1 - offloaded) * s_k * c / gu.local_cpu_rate
    gu_energy = (1 - offloaded) * gu.capacitance * s_k * c * gu.local_cpu_rate ** 2
    compute_energy = 0.0
    relay_energy = 0.0
    hap_energy = 0.0

    for j, uav in enumerate(scenario.uavs):
        if not dec.x[i, j, slot]:
            continue
        uav_pos = _uav_position(traj, j, n, uav.altitude)
        r_ug = rate_gu_uav(gu_uav_gain(gu.position, uav_pos, scenario.channel), scenario.channel, gu.tx_power)
        if r_ug <= 0:
            raise ZeroRateError(f"GU-UAV rate is zero for GU {i}, UAV {j}, slot {n}")
        delay += s_k / r_ug
        gu_energy += gu.tx_power * s_k / r_ug
        if dec.y[i, j, slot]:
            delay += s_k * c / uav.cpu_rate
            compute_energy += uav.capacitance * s_k * c * uav.cpu_rate ** 2
        if dec.z[i, j, slot]:
            r_uh = rate_uav_hap(uav_pos, hap.position, scenario.channel, uav.tx_power)
            if r_uh <= 0:
                raise ZeroRateError(f"UAV-HAP rate is zero for UAV {j}, slot {n}")
            delay += s_k / r_uh + s_k * c / hap.cpu_rate
            relay_energy += uav.tx_power * s_k / r_uh
            hap_energy += hap.capacitance * s_k * c * hap.cpu_rate ** 2

    return SlotCost(
        delay=delay,
        gu_energy=gu_energy,
        uav_compute_energy=compute_energy,
        uav_relay_energy=relay_energy,
        hap_energy=hap_energy,
    )


def total_uav_energy(
    j: int,
    dec: OffloadDecision,
    traj: TrajectoryPlan,
    scenario: Scenario,
    sizes: np.ndarray
) -> float:
    """
    Relay, compute and flight energy of UAV ``j`` over the horizon.

    Args:
        j: UAV index
        dec: Offloading decision
        traj: Trajectory plan
        scenario: Scenario
        sizes: (I, N) task-part sizes in bits

    Returns:
        Energy in joules
    """
    sizes = np.asarray(sizes, dtype=float)
    total = 0.0
    for n in range(1, scenario.num_slots + 1):
        total += flight_energy(j, n, traj, scenario)
        for i in range(scenario.num_gus):
            if not dec.x[i, j, n - 1]:
                continue
            only_j = np.zeros_like(dec.x)
            only_j[i, j, n - 1] = dec.x[i, j, n - 1]
            single = OffloadDecision(
                only_j,
                np.where(only_j > 0, dec.y, 0),
                np.where(only_j > 0, dec.z, 0),
            )
            cost = slot_cost(i, n, sizes[i, n - 1], single, traj, scenario)
            total += cost.uav_compute_energy + cost.uav_relay_energy
    return total
