"""Scenario and history generation, held-out evaluation and parameter sweeps."""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.models.plans import OffloadDecision, TrajectoryPlan
from src.models.reports import BaselineMode, SolveReport, Tolerances
from src.models.scenario import (
    ChannelParams,
    GroundUser,
    Hap,
    Position3D,
    PropulsionParams,
    Scenario,
    TimeGrid,
    Uav,
)
from src.models.schemas import ExperimentConfig, GeneratorSettings
from src.models.uncertainty import AmbiguitySet, Distribution, SampleSpace
from src.physics.costs import CostModel
from src.services.baseline_service import solve_baseline
from src.services.drcoto_service import drcoto_solve
from src.services.export_service import export_service
from src.services.uncertainty_service import build_reference
from src.utils.exceptions import SolverError, ValidationError
from src.utils.units import dbm_to_watts, mbit_to_bits

logger = logging.getLogger(__name__)

# Independent random streams derived from one seed.
_SCENARIO_STREAM = 0
_HISTORY_STREAM = 1
_DATASET_STREAM = 2

ORDER_TOL = 1e-6


@dataclass(frozen=True)
class History:
    """Historical task sizes and the hidden distributions they were drawn from."""

    samples: np.ndarray                    # (I, Q) bits
    truths: Tuple[Distribution, ...]

    def references(self, space: SampleSpace) -> Tuple[Distribution, ...]:
        return tuple(build_reference(row, space) for row in self.samples)


def build_space(gen: GeneratorSettings) -> SampleSpace:
    return SampleSpace.from_values([mbit_to_bits(v) for v in gen.task_samples_mbit], size_mode=gen.size_mode)


def generate_scenario(seed: int, overrides: Optional[Dict[str, Any]] = None) -> Scenario:
    """
    Random scenario: GUs uniform over the area, UAVs flying west to east.

    UAV j flies along the evenly spaced row ``y = Y * (j + 1) / (J + 1)``; the straight-line
    span is centered and capped so it fits the N-slot flight budget.

    Args:
        seed: Random seed
        overrides: Generator settings to replace (field names or I/J/N)

    Returns:
        Scenario in SI units
    """
    gen = GeneratorSettings.from_defaults(overrides)
    rng = np.random.default_rng([seed, _SCENARIO_STREAM])
    gu_xy = rng.uniform(0.0, 1.0, size=(gen.num_gus, 2)) * np.array([gen.area_x_m, gen.area_y_m])

    span = min(
        gen.area_x_m - 2.0 * gen.uav_edge_margin_m,
        gen.reach_fraction * gen.num_slots * gen.uav_speed_mps * gen.slot_len_s,
    )
    span = max(span, 0.0)
    start_x = (gen.area_x_m - span) / 2.0
    rows = gen.area_y_m * (np.arange(gen.num_uavs) + 1.0) / (gen.num_uavs + 1.0)

    gus = tuple(
        GroundUser(
            id=i,
            position=Position3D(x=float(gu_xy[i, 0]), y=float(gu_xy[i, 1]), z=0.0),
            cpu_cycles_per_bit=gen.cpu_cycles_per_bit,
            local_cpu_rate=gen.gu_cpu_hz,
            capacitance=gen.gu_capacitance,
            tx_power=dbm_to_watts(gen.gu_tx_power_dbm),
            energy_budget=gen.gu_energy_budget_j,
        )
        for i in range(gen.num_gus)
    )
    uavs = tuple(
        Uav(
            id=j,
            start_position=Position3D(x=start_x, y=float(rows[j]), z=gen.uav_altitude_m),
            end_position=Position3D(x=start_x + span, y=float(rows[j]), z=gen.uav_altitude_m),
            cpu_rate=gen.uav_cpu_hz,
            capacitance=gen.uav_capacitance,
            tx_power=dbm_to_watts(gen.uav_tx_power_dbm),
            energy_budget=gen.uav_energy_budget_j,
            cruise_speed=gen.uav_speed_mps,
            quota=gen.uav_quota,
        )
        for j in range(gen.num_uavs)
    )
    return Scenario(
        area_x=gen.area_x_m,
        area_y=gen.area_y_m,
        min_separation=gen.min_separation_m,
        time=TimeGrid(num_slots=gen.num_slots, slot_len=gen.slot_len_s),
        gus=gus,
        uavs=uavs,
        hap=Hap(
            position=Position3D(x=gen.hap_x_m, y=gen.hap_y_m, z=gen.hap_altitude_m),
            cpu_rate=gen.hap_cpu_hz,
            capacitance=gen.hap_capacitance,
            energy_budget=gen.hap_energy_budget_j,
            quota=gen.hap_quota,
        ),
        channel=ChannelParams(
            los_a=gen.los_a,
            los_b=gen.los_b_per_deg,
            beta0=gen.beta0,
            pathloss_exp=gen.pathloss_exp,
            nlos_atten=gen.nlos_atten,
            bandwidth_gu=gen.bandwidth_gu_hz,
            noise_power=dbm_to_watts(gen.noise_power_dbm),
            interference=dbm_to_watts(gen.interference_dbm),
            bandwidth_uh=gen.bandwidth_uh_hz,
            antenna_gain=gen.antenna_gain,
            total_loss=gen.total_loss,
            noise_temp=gen.noise_temp_k,
            carrier_freq=gen.carrier_freq_hz,
        ),
        propulsion=PropulsionParams(
            blade_power=gen.blade_power_w,
            induced_power=gen.induced_power_w,
            tip_speed=gen.tip_speed_mps,
            drag_ratio=gen.drag_ratio,
            air_density=gen.air_density_kg_m3,
            rotor_solidity=gen.rotor_solidity,
            rotor_area=gen.rotor_area_m2,
            mean_rotor_velocity=gen.mean_rotor_velocity_mps,
            model=gen.propulsion_model,
        ),
    )


def generate_history(seed: int, scenario: Scenario, space: SampleSpace, num_samples: int) -> History:
    """
    Draw hidden per-GU distributions and ``num_samples`` historical sizes from each.

    Each hidden distribution is the uniform one plus a zero-sum perturbation of at most
    1/(2K) per weight. Samples are jittered uniformly inside their bins (the last bin,
    unbounded above, is mirrored around its value).

    Raises:
        ValidationError: If ``num_samples`` is below 1
    """
    if num_samples < 1:
        raise ValidationError("At least one historical sample per GU is required")
    rng = np.random.default_rng([seed, _HISTORY_STREAM])
    size = space.size
    lows = space.bin_edges[:-1]
    highs = space.bin_edges[1:].copy()
    highs[-1] = space.values[-1] + (space.values[-1] - lows[-1])

    truths: List[Distribution] = []
    samples = np.empty((scenario.num_gus, num_samples))
    for i in range(scenario.num_gus):
        u = rng.uniform(-0.5 / size, 0.5 / size, size=size)
        truth = Distribution.normalized(1.0 / size + (u - u.mean()))
        bins = rng.choice(size, size=num_samples, p=truth.probs)
        samples[i] = rng.uniform(lows[bins], highs[bins])
        truths.append(truth)
    return History(samples=samples, truths=tuple(truths))


def draw_datasets(
    seed: int,
    truths: Sequence[Distribution],
    space: SampleSpace,
    num_slots: int,
    count: int
) -> List[np.ndarray]:
    """``count`` realized (I, N) per-slot size tables drawn from the hidden distributions."""
    rng = np.random.default_rng([seed, _DATASET_STREAM])
    slot_values = space.slot_values(num_slots)
    datasets = []
    for _ in range(count):
        table = np.empty((len(truths), num_slots))
        for i, truth in enumerate(truths):
            table[i] = slot_values[rng.choice(space.size, size=num_slots, p=truth.probs)]
        datasets.append(table)
    return datasets


def evaluate_actual(
    decision: OffloadDecision,
    trajectory: TrajectoryPlan,
    datasets: Sequence[np.ndarray],
    scenario: Scenario
) -> Tuple[float, float]:
    """
    Total delay of a fixed solution on realized task sizes.

    Args:
        decision: Offloading decision
        trajectory: Trajectory plan
        datasets: Realized sizes in bits, each (I,) or (I, N)
        scenario: Scenario

    Returns:
        (mean, population standard deviation) of the total delay across datasets
    """
    model = CostModel(scenario)
    unit = model.unit_delay(decision, model.rates(trajectory))
    delays = []
    for sizes in datasets:
        sizes = np.asarray(sizes, dtype=float)
        if sizes.ndim == 1:
            sizes = sizes[:, None]
        delays.append(float((np.broadcast_to(sizes, unit.shape) * unit).sum()))
    delays = np.array(delays)
    return float(delays.mean()), float(delays.std())


def solve_method(method: str, scenario: Scenario, amb: AmbiguitySet, tolerances: Tolerances) -> SolveReport:
    if method == "drcoto":
        return drcoto_solve(scenario, amb, tolerances)
    return solve_baseline(BaselineMode(method), scenario, amb, tolerances)


@dataclass(frozen=True)
class SweepCell:
    """One solver run of a sweep."""

    group: str
    method: str
    num_gus: int
    eps: float
    quota: int
    seed: int
    eval_datasets: int
    overrides: Tuple[Tuple[str, Any], ...]
    tolerances: Tuple[Tuple[str, Any], ...]


def run_cell(cell: SweepCell) -> Dict[str, Any]:
    """Generate, solve and evaluate one sweep cell; failures become a row marked failed."""
    row: Dict[str, Any] = {
        "group": cell.group,
        "method": cell.method,
        "I": cell.num_gus,
        "eps": cell.eps,
        "quota": cell.quota,
    }
    try:
        overrides = dict(cell.overrides)
        overrides.update({"num_gus": cell.num_gus, "uav_quota": cell.quota})
        gen = GeneratorSettings.from_defaults(overrides)
        scenario = generate_scenario(cell.seed, overrides)
        space = build_space(gen)
        history = generate_history(cell.seed, scenario, space, gen.num_samples)
        amb = AmbiguitySet(space=space, references=history.references(space), radius=cell.eps)
        report = solve_method(cell.method, scenario, amb, Tolerances(**dict(cell.tolerances)))
        datasets = draw_datasets(cell.seed, history.truths, space, scenario.num_slots, cell.eval_datasets)
        mean, std = evaluate_actual(report.decisions, report.trajectories, datasets, scenario)
        row.update(
            objective=report.objective,
            wall_time=report.wall_time,
            converged=report.converged,
            mean=mean,
            std=std,
            status="ok",
        )
    except (SolverError, ValidationError, ValueError) as e:
        logger.error(f"[sweep {cell.group} {cell.method} I={cell.num_gus} eps={cell.eps} quota={cell.quota}] {e}")
        row.update(objective=np.nan, wall_time=0.0, converged=False, mean=np.nan, std=np.nan, status="failed")
    return row


def _checks(table: pd.DataFrame) -> List[Dict[str, Any]]:
    """Trend and ordering checks over a finished sweep."""
    checks: List[Dict[str, Any]] = []
    ok = table[table["status"] == "ok"]

    def record(name: str, passed: bool, detail: str) -> None:
        checks.append({"check": name, "passed": bool(passed), "detail": detail})
        if not passed:
            logger.warning(f"[sweep] check failed: {name} ({detail})")

    gus = ok[ok["group"] == "gu"]
    for method, part in gus.groupby("method", sort=True):
        values = part.sort_values("I")["objective"].to_numpy()
        record(f"{method}_nondecreasing_in_I", bool(np.all(np.diff(values) >= -ORDER_TOL)), f"{values.tolist()}")
    for count, part in gus.groupby("I", sort=True):
        by = part.set_index("method")["objective"]
        if {"so", "drcoto", "ro"} <= set(by.index):
            passed = by["so"] <= by["drcoto"] + ORDER_TOL and by["drcoto"] <= by["ro"] + ORDER_TOL
            record(f"so_le_drcoto_le_ro_I{count}", passed, f"so={by['so']:.6g} drcoto={by['drcoto']:.6g} ro={by['ro']:.6g}")
    if not gus.empty:
        top = gus[gus["I"] == gus["I"].max()].set_index("method")["std"]
        for other in ("ro", "do"):
            if "drcoto" in top.index and other in top.index:
                record(
                    f"drcoto_std_le_{other}",
                    top["drcoto"] <= top[other] + ORDER_TOL,
                    f"drcoto={top['drcoto']:.6g} {other}={top[other]:.6g}",
                )

    grid = ok[ok["group"] == "grid"]
    for eps, part in grid.groupby("eps", sort=True):
        values = part.sort_values("quota")["objective"].to_numpy()
        record(f"drcoto_nonincreasing_in_quota_eps{eps:g}", bool(np.all(np.diff(values) <= ORDER_TOL)), f"{values.tolist()}")
    for quota, part in grid.groupby("quota", sort=True):
        values = part.sort_values("eps")["objective"].to_numpy()
        record(f"drcoto_nondecreasing_in_eps_quota{quota}", bool(np.all(np.diff(values) >= -ORDER_TOL)), f"{values.tolist()}")
    return checks


class ExperimentService:
    """Runs sweeps and writes their result tables."""

    def cells(self, config: ExperimentConfig) -> List[SweepCell]:
        gen = GeneratorSettings.from_defaults(config.overrides)
        overrides = tuple(sorted(config.overrides.items()))
        tolerances = tuple(sorted(config.tolerances.items()))
        cells = [
            SweepCell("gu", method, count, gen.eps, gen.uav_quota, config.seed, config.eval_datasets, overrides, tolerances)
            for count in config.gu_counts
            for method in config.methods
        ]
        cells += [
            SweepCell("grid", "drcoto", gen.num_gus, eps, quota, config.seed, config.eval_datasets, overrides, tolerances)
            for quota in config.quota_values
            for eps in config.eps_values
        ]
        return cells

    def run_sweep(self, config: ExperimentConfig) -> Dict[str, pd.DataFrame]:
        """
        Run every cell, then write ``objective.csv``, ``actual.csv`` and ``checks.csv``.

        Args:
            config: Experiment definition

        Returns:
            Result tables keyed by file stem
        """
        config.solver_tolerances()
        cells = self.cells(config)
        logger.info(f"[sweep] {len(cells)} cells, {config.workers} worker(s)")
        if config.workers > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                rows = list(pool.map(run_cell, cells))
        else:
            rows = [run_cell(cell) for cell in cells]

        table = pd.DataFrame(rows).sort_values(["group", "method", "I", "eps", "quota"], kind="mergesort")
        table = table.reset_index(drop=True)
        if not config.record_timing:
            table["wall_time"] = 0.0
        objective = table[["group", "method", "I", "eps", "quota", "objective", "wall_time", "converged", "status"]]
        actual = table[["group", "method", "I", "eps", "quota", "mean", "std"]]
        checks = pd.DataFrame(_checks(table), columns=["check", "passed", "detail"])

        out = Path(config.output_dir)
        export_service.write_table(objective, out / "objective.csv")
        export_service.write_table(actual, out / "actual.csv")
        export_service.write_table(checks, out / "checks.csv")
        return {"objective": objective, "actual": actual, "checks": checks}


experiment_service = ExperimentService()


def run_sweep(config: ExperimentConfig) -> Dict[str, pd.DataFrame]:
    return experiment_service.run_sweep(config)
