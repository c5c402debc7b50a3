"""Channel, propulsion and per-slot cost formulas."""
import math

import numpy as np
import pytest

from src.models.plans import OffloadDecision, TrajectoryPlan
from src.models.scenario import Position3D, PropulsionModel
from src.physics.channel import (
    air_to_ground_gain,
    free_space_loss,
    gu_uav_gain,
    hap_link_snr,
    los_probability,
    rate_gu_uav,
    rate_uav_hap,
)
from src.physics.costs import CostModel, slot_cost, total_uav_energy
from src.physics.energy import (
    blade_profile_power,
    flight_energy,
    hover_power,
    induced_power,
    parasite_power,
    propulsion_power,
)
from src.utils.exceptions import DomainError, SpeedLimitError
from src.utils.units import db_to_linear, dbm_to_watts, watts_to_dbm
from tests.conftest import TINY, make_scenario


class TestChannel:
    def test_los_at_theta_equal_a(self):
        assert los_probability(9.61, 9.61, 0.16) == pytest.approx(1.0 / 10.61)
        assert los_probability(9.61, 9.61, 0.16) == pytest.approx(0.0942507069, rel=1e-9)

    def test_los_at_45_degrees(self):
        expected = 1.0 / (1.0 + 9.61 * math.exp(-0.16 * (45.0 - 9.61)))
        assert los_probability(45.0, 9.61, 0.16) == pytest.approx(expected, rel=1e-12)
        assert los_probability(45.0, 9.61, 0.16) == pytest.approx(0.9676919, rel=1e-6)

    def test_los_saturates_overhead(self):
        assert los_probability(90.0, 9.61, 50.0) == pytest.approx(1.0)

    def test_los_rejects_bad_angle(self):
        with pytest.raises(DomainError):
            los_probability(91.0, 9.61, 0.16)

    def test_gain_without_nlos_attenuation_ignores_angle(self, tiny_scenario):
        ch = tiny_scenario.channel.model_copy(update={"nlos_atten": 1.0})
        for horizontal in (0.0, 150.0, 900.0):
            d = math.hypot(horizontal, 200.0)
            assert air_to_ground_gain(horizontal, 200.0, ch) == pytest.approx(ch.beta0 * d ** -ch.pathloss_exp)

    def test_gain_straight_overhead(self, tiny_scenario):
        ch = tiny_scenario.channel.model_copy(
            update={"beta0": 1.0, "pathloss_exp": 2.0, "nlos_atten": 0.2, "los_a": 9.61, "los_b": 0.16}
        )
        p = los_probability(90.0, 9.61, 0.16)
        expected = p * 200.0 ** -2 + (1.0 - p) * 0.2 * 200.0 ** -2
        gain = gu_uav_gain(Position3D(x=0.0, y=0.0, z=0.0), Position3D(x=0.0, y=0.0, z=200.0), ch)
        assert gain == pytest.approx(expected, rel=1e-12)
        assert gain == pytest.approx(2.4999501491e-05, rel=1e-9)

    def test_gain_needs_uav_above(self, tiny_scenario):
        with pytest.raises(DomainError):
            gu_uav_gain(Position3D(x=0.0, y=0.0), Position3D(x=0.0, y=0.0, z=0.0), tiny_scenario.channel)

    def test_uplink_rate_cases(self, tiny_scenario):
        ch = tiny_scenario.channel
        noise = ch.noise_power + ch.interference
        assert rate_gu_uav(0.0, ch, 0.1) == 0.0
        assert rate_gu_uav(noise / 0.1, ch, 0.1) == pytest.approx(ch.bandwidth_gu)
        assert rate_gu_uav(15.0 * noise / 0.1, ch, 0.1) == pytest.approx(4.0 * ch.bandwidth_gu)

    def test_free_space_loss(self, tiny_scenario):
        ch = tiny_scenario.channel.model_copy(update={"carrier_freq": 2e9})
        assert free_space_loss(2e4, ch) == pytest.approx(3.562073e-13, rel=1e-6)

    def test_relay_rate_at_unit_snr(self, tiny_scenario):
        ch = tiny_scenario.channel
        distance = 19800.0
        thermal = ch.bandwidth_uh * ch.boltzmann * ch.noise_temp
        p_tx = thermal / (ch.antenna_gain * ch.total_loss * free_space_loss(distance, ch))
        assert hap_link_snr(distance, ch, p_tx) == pytest.approx(1.0)
        uav = Position3D(x=0.0, y=0.0, z=200.0)
        hap = Position3D(x=0.0, y=0.0, z=200.0 + distance)
        assert rate_uav_hap(uav, hap, ch, p_tx) == pytest.approx(ch.bandwidth_uh)

    def test_unit_conversions(self):
        assert dbm_to_watts(30.0) == pytest.approx(1.0)
        assert dbm_to_watts(-90.0) == pytest.approx(1e-12)
        assert watts_to_dbm(0.1) == pytest.approx(20.0)
        assert db_to_linear(20.0) == pytest.approx(100.0)


class TestPropulsion:
    def test_hover(self, tiny_scenario):
        pp = tiny_scenario.propulsion
        assert propulsion_power(0.0, pp) == pytest.approx(pp.blade_power + pp.induced_power)
        assert hover_power(pp) == pytest.approx(propulsion_power(0.0, pp))

    def test_terms_at_mean_rotor_velocity(self, tiny_scenario):
        pp = tiny_scenario.propulsion
        v = pp.mean_rotor_velocity
        blade = pp.blade_power * (1.0 + 3.0 * v ** 2 / pp.tip_speed ** 2)
        parasite = 0.5 * pp.drag_ratio * pp.air_density * pp.rotor_solidity * pp.rotor_area * v ** 3
        induced = pp.induced_power * math.sqrt(math.sqrt(1.0 + v ** 4 / (4.0 * v ** 2)) - 0.5)
        assert blade_profile_power(v, pp) == pytest.approx(blade)
        assert parasite_power(v, pp) == pytest.approx(parasite)
        assert induced_power(v, pp) == pytest.approx(induced)
        assert propulsion_power(v, pp) == pytest.approx(blade + parasite + induced)

    def test_standard_model_induced_term(self, tiny_scenario):
        pp = tiny_scenario.propulsion.model_copy(update={"model": PropulsionModel.STANDARD})
        v = 20.0
        v0 = pp.mean_rotor_velocity
        expected = pp.induced_power * math.sqrt(math.sqrt(1.0 + v ** 4 / (4.0 * v0 ** 4)) - v ** 2 / (2.0 * v0 ** 2))
        assert induced_power(v, pp) == pytest.approx(expected)

    def test_negative_speed(self, tiny_scenario):
        with pytest.raises(DomainError):
            propulsion_power(-1.0, tiny_scenario.propulsion)

    def test_printed_model_outside_its_domain(self, tiny_scenario):
        pp = tiny_scenario.propulsion.model_copy(
            update={"model": PropulsionModel.PRINTED, "mean_rotor_velocity": 0.5}
        )
        with pytest.raises(DomainError, match="Induced power undefined"):
            induced_power(20.0, pp)

    def test_standard_model_at_high_speed_stays_finite(self, tiny_scenario):
        pp = tiny_scenario.propulsion.model_copy(update={"model": PropulsionModel.STANDARD})
        value = induced_power(1e4, pp)
        assert value >= 0.0
        assert math.isfinite(value)


class TestFlightEnergy:
    def _trajectory(self, scenario, step):
        start = scenario.start_xy()[0]
        wp = np.array([[start, start + np.array([step, 0.0]), start + np.array([step, 0.0])]])
        return TrajectoryPlan(wp)

    def test_stationary_slot_hovers(self, tiny_scenario):
        traj = self._trajectory(tiny_scenario, 0.0)
        tau = tiny_scenario.time.slot_len
        assert flight_energy(0, 1, traj, tiny_scenario) == pytest.approx(hover_power(tiny_scenario.propulsion) * tau)

    def test_full_slot_flight(self, tiny_scenario):
        uav = tiny_scenario.uavs[0]
        tau = tiny_scenario.time.slot_len
        traj = self._trajectory(tiny_scenario, uav.cruise_speed * tau)
        expected = propulsion_power(uav.cruise_speed, tiny_scenario.propulsion) * tau
        assert flight_energy(0, 1, traj, tiny_scenario) == pytest.approx(expected)

    def test_half_slot_flight(self, tiny_scenario):
        uav = tiny_scenario.uavs[0]
        pp = tiny_scenario.propulsion
        tau = tiny_scenario.time.slot_len
        traj = self._trajectory(tiny_scenario, uav.cruise_speed * tau / 2.0)
        expected = (propulsion_power(uav.cruise_speed, pp) + hover_power(pp)) * tau / 2.0
        assert flight_energy(0, 1, traj, tiny_scenario) == pytest.approx(expected)

    def test_overspeed(self, tiny_scenario):
        uav = tiny_scenario.uavs[0]
        traj = self._trajectory(tiny_scenario, 1.5 * uav.cruise_speed * tiny_scenario.time.slot_len)
        with pytest.raises(SpeedLimitError):
            flight_energy(0, 1, traj, tiny_scenario)

    def test_cost_model_matches_scalar_flight(self, tiny_scenario):
        traj = TrajectoryPlan.straight_line(tiny_scenario.start_xy(), tiny_scenario.end_xy(), tiny_scenario.num_slots)
        model = CostModel(tiny_scenario)
        per_slot = model.flight(traj)
        for n in range(1, tiny_scenario.num_slots + 1):
            assert per_slot[0, n - 1] == pytest.approx(flight_energy(0, n, traj, tiny_scenario))


class TestSlotCost:
    def test_local_computing(self, tiny_scenario):
        dec = OffloadDecision.zeros(2, 1, 2)
        traj = TrajectoryPlan.straight_line(tiny_scenario.start_xy(), tiny_scenario.end_xy(), 2)
        gu = tiny_scenario.gus[0]
        cost = slot_cost(0, 1, 2e5, dec, traj, tiny_scenario)
        assert gu.cpu_cycles_per_bit == 1e3 and gu.local_cpu_rate == 1e9
        assert cost.delay == pytest.approx(0.2)
        assert cost.gu_energy == pytest.approx(gu.capacitance * 2e5 * 1e3 * 1e18)
        assert cost.uav_compute_energy == 0.0 and cost.hap_energy == 0.0

    def test_uav_computing(self, tiny_scenario):
        y = np.zeros((2, 1, 2))
        y[0, 0, 0] = 1
        dec = OffloadDecision.from_yz(y, np.zeros_like(y))
        traj = TrajectoryPlan.straight_line(tiny_scenario.start_xy(), tiny_scenario.end_xy(), 2)
        gu, uav = tiny_scenario.gus[0], tiny_scenario.uavs[0]
        x, yy = traj.waypoints[0, 1]
        rate = rate_gu_uav(
            gu_uav_gain(gu.position, Position3D(x=x, y=yy, z=uav.altitude), tiny_scenario.channel),
            tiny_scenario.channel,
            gu.tx_power,
        )
        cost = slot_cost(0, 1, 2e5, dec, traj, tiny_scenario)
        assert cost.delay == pytest.approx(2e5 / rate + 2e5 * gu.cpu_cycles_per_bit / uav.cpu_rate)
        assert cost.hap_energy == 0.0
        assert cost.uav_relay_energy == 0.0

    def test_relay_to_hap(self, tiny_scenario):
        z = np.zeros((2, 1, 2))
        z[1, 0, 1] = 1
        dec = OffloadDecision.from_yz(np.zeros_like(z), z)
        traj = TrajectoryPlan.straight_line(tiny_scenario.start_xy(), tiny_scenario.end_xy(), 2)
        gu, uav, hap = tiny_scenario.gus[1], tiny_scenario.uavs[0], tiny_scenario.hap
        x, yy = traj.waypoints[0, 2]
        pos = Position3D(x=x, y=yy, z=uav.altitude)
        r_ug = rate_gu_uav(gu_uav_gain(gu.position, pos, tiny_scenario.channel), tiny_scenario.channel, gu.tx_power)
        r_uh = rate_uav_hap(pos, hap.position, tiny_scenario.channel, uav.tx_power)
        cost = slot_cost(1, 2, 2e5, dec, traj, tiny_scenario)
        expected = 2e5 / r_ug + 2e5 / r_uh + 2e5 * gu.cpu_cycles_per_bit / hap.cpu_rate
        assert cost.delay == pytest.approx(expected)
        assert cost.uav_compute_energy == 0.0
        assert cost.uav_relay_energy == pytest.approx(uav.tx_power * 2e5 / r_uh)

    def test_slot_outside_horizon(self, tiny_scenario):
        dec = OffloadDecision.zeros(2, 1, 2)
        traj = TrajectoryPlan.straight_line(tiny_scenario.start_xy(), tiny_scenario.end_xy(), 2)
        with pytest.raises(DomainError):
            slot_cost(0, 3, 1e5, dec, traj, tiny_scenario)

    def test_vectorized_model_matches_slot_cost(self):
        scenario = make_scenario(5, I=3, J=2, N=3)
        rng = np.random.default_rng(0)
        y = np.zeros((3, 2, 3))
        z = np.zeros((3, 2, 3))
        for i in range(3):
            for n in range(3):
                choice = rng.integers(0, 5)
                if choice in (1, 2):
                    y[i, choice - 1, n] = 1
                elif choice in (3, 4):
                    z[i, choice - 3, n] = 1
        dec = OffloadDecision.from_yz(y, z)
        traj = TrajectoryPlan.straight_line(scenario.start_xy(), scenario.end_xy(), 3)
        model = CostModel(scenario)
        rates = model.rates(traj)
        unit_delay = model.unit_delay(dec, rates)
        unit_gu = model.unit_gu_energy(dec, rates)
        size = 7.5e5
        for i in range(3):
            for n in range(3):
                cost = slot_cost(i, n + 1, size, dec, traj, scenario)
                assert cost.delay == pytest.approx(size * unit_delay[i, n], rel=1e-9)
                assert cost.gu_energy == pytest.approx(size * unit_gu[i, n], rel=1e-9)

    def test_idle_stationary_uav_only_hovers(self, tiny_scenario):
        start = tiny_scenario.start_xy()
        traj = TrajectoryPlan(np.repeat(start[:, None, :], 3, axis=1))
        dec = OffloadDecision.zeros(2, 1, 2)
        energy = total_uav_energy(0, dec, traj, tiny_scenario, np.full((2, 2), 1e6))
        tau = tiny_scenario.time.slot_len
        assert energy == pytest.approx(2 * hover_power(tiny_scenario.propulsion) * tau)

    def test_uav_energy_of_one_relay(self, tiny_scenario):
        z = np.zeros((2, 1, 2))
        z[0, 0, 0] = 1
        dec = OffloadDecision.from_yz(np.zeros_like(z), z)
        traj = TrajectoryPlan.straight_line(tiny_scenario.start_xy(), tiny_scenario.end_xy(), 2)
        sizes = np.full((2, 2), 1e6)
        flight = sum(flight_energy(0, n, traj, tiny_scenario) for n in (1, 2))
        relay = slot_cost(0, 1, 1e6, dec, traj, tiny_scenario).uav_relay_energy
        assert total_uav_energy(0, dec, traj, tiny_scenario, sizes) == pytest.approx(flight + relay)

    def test_tiny_scenario_shape(self, tiny_scenario):
        assert (tiny_scenario.num_gus, tiny_scenario.num_uavs, tiny_scenario.num_slots) == tuple(TINY.values())


class TestReachBounds:
    def test_distances_bracket_admissible_positions(self):
        scenario = make_scenario(5, I=3, J=2, N=4)
        model = CostModel(scenario)
        straight = TrajectoryPlan.straight_line(scenario.start_xy(), scenario.end_xy(), 4)
        near, far = model.reach_distances(model.gu_xy)
        actual = np.linalg.norm(
            straight.waypoints[None, :, 1:, :] - model.gu_xy[:, None, None, :], axis=-1
        )
        assert np.all(near <= actual + 1e-9)
        assert np.all(actual <= far + 1e-9)
        assert np.all(near >= 0.0)

    def test_rates_of_perturbed_routes_stay_inside(self):
        scenario = make_scenario(5, I=3, J=2, N=4)
        model = CostModel(scenario)
        bounds = model.reach_rate_bounds()
        straight = TrajectoryPlan.straight_line(scenario.start_xy(), scenario.end_xy(), 4)
        rng = np.random.default_rng(2)
        for _ in range(10):
            free = straight.waypoints[:, 1:-1] + rng.uniform(-3.0, 3.0, size=(2, 3, 2))
            traj = straight.with_free(free)
            if not (traj.steps() <= model.speed[:, None] * model.slot_len).all():
                continue
            rates = model.rates(traj)
            assert np.all(bounds.inv_ug_lo <= rates.inv_ug * (1 + 1e-9))
            assert np.all(rates.inv_ug <= bounds.inv_ug_hi * (1 + 1e-9))
            assert np.all(bounds.inv_uh_lo <= rates.inv_uh * (1 + 1e-9))
            assert np.all(rates.inv_uh <= bounds.inv_uh_hi * (1 + 1e-9))
