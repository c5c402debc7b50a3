"""Distributionally robust offloading and trajectory optimization.

Alternates the Benders solve of the fixed-distribution problem with the worst-case
distribution LP until the distributions stop changing or the worst-case delay settles.
"""
import logging
import time
from typing import List, Optional, Tuple

import numpy as np

from src.models.plans import OffloadDecision, TrajectoryPlan
from src.models.reports import BendersLogRow, SolveReport, Tolerances
from src.models.scenario import Scenario
from src.models.uncertainty import AmbiguitySet, Distribution, SampleSpace, mean_sizes, same_distributions
from src.physics.costs import CostModel
from src.services.benders_service import P2Result, P2State, solve_p2
from src.services.trajectory_service import SPEED_RTOL
from src.services.uncertainty_service import SideConstraint, WorstCase, worst_case_distribution
from src.utils.exceptions import InfeasibleError, NoFeasibleStartError

logger = logging.getLogger(__name__)

MONOTONE_TOL = 1e-6
_REPAIR_TOL = 1e-12


def _check_straight_line(traj: TrajectoryPlan, model: CostModel) -> None:
    """The straight line must respect the speed limit and keep UAVs apart."""
    limit = model.speed * model.slot_len
    steps = traj.steps()
    too_fast = steps > limit[:, None] * (1.0 + SPEED_RTOL)
    if too_fast.any():
        j, n = (int(v) for v in np.argwhere(too_fast)[0])
        raise NoFeasibleStartError(
            f"UAV {j} needs {steps[j, n]:.2f} m per slot on the straight line, limit {limit[j]:.2f} m"
        )
    wp = traj.waypoints
    min_sep = model.scenario.min_separation
    for j in range(model.num_uavs):
        for jj in range(j + 1, model.num_uavs):
            gap = np.linalg.norm(wp[j] - wp[jj], axis=1)
            if np.any(gap < min_sep):
                raise NoFeasibleStartError(f"UAVs {j} and {jj} come closer than {min_sep} m on straight lines")


def initial_feasible(
    scenario: Scenario,
    amb: AmbiguitySet,
    model: Optional[CostModel] = None
) -> Tuple[OffloadDecision, TrajectoryPlan, Tuple[Distribution, ...]]:
    """
    Starting point for the outer loop.

    Local computing everywhere unless a task part misses its slot deadline (or a GU
    exceeds its energy budget) under the reference distributions; such parts are moved
    greedily, worst first, to the nearest UAV with spare quota (relayed to the HAP when
    that is faster and HAP quota remains).

    Args:
        scenario: Scenario
        amb: Ambiguity set (its references are used)
        model: Cost model, built from ``scenario`` when omitted

    Returns:
        (decision, straight-line trajectory, reference distributions)

    Raises:
        NoFeasibleStartError: If quotas run out or the straight lines are inadmissible
    """
    model = model or CostModel(scenario)
    num_gus, num_uavs, num_slots = model.num_gus, model.num_uavs, model.num_slots
    traj = TrajectoryPlan.straight_line(scenario.start_xy(), scenario.end_xy(), num_slots)
    _check_straight_line(traj, model)

    dists = amb.references
    sizes = mean_sizes(dists, amb.space, num_slots)
    rates = model.rates(traj)
    positions = traj.slot_positions()
    shape = (num_gus, num_uavs, num_slots)
    y = np.zeros(shape, dtype=np.int8)
    z = np.zeros(shape, dtype=np.int8)

    while True:
        dec = OffloadDecision.from_yz(y, z)
        ev = model.evaluate(dec, traj, sizes, rates)
        local = ~dec.offloaded()
        late = ev.g_tau > _REPAIR_TOL * model.slot_len
        if np.any(late & ~local):
            i, n = (int(v) for v in np.argwhere(late & ~local)[0])
            raise NoFeasibleStartError(f"GU {i} misses the slot {n + 1} deadline even when offloaded")
        if late.any():
            score = np.where(late, ev.g_tau, -np.inf)
            i, n = (int(v) for v in np.unravel_index(int(np.argmax(score)), score.shape))
        else:
            over = np.flatnonzero(ev.g_gu > _REPAIR_TOL * model.budget_gu)
            if over.size == 0:
                break
            i = int(over[0])
            open_slots = np.flatnonzero(local[i])
            if open_slots.size == 0:
                raise NoFeasibleStartError(f"GU {i} exceeds its energy budget with every slot offloaded")
            n = int(open_slots[0])

        gu = model.gu_xy[i]
        order = np.argsort(np.linalg.norm(positions[:, n, :] - gu[None, :], axis=1), kind="stable")
        hap_free = z[:, :, n].sum() < model.quota_hap
        placed = False
        for j in order:
            options = []
            if y[:, j, n].sum() < model.quota_uav[j]:
                options.append((model.uav_delay[i, j], "y"))
            if hap_free:
                options.append((rates.inv_uh[j, n] + model.hap_delay[i], "z"))
            if not options:
                continue
            _, target = min(options)
            if target == "y":
                y[i, j, n] = 1
            else:
                z[i, j, n] = 1
            logger.debug(f"[init] GU {i} slot {n + 1} -> UAV {j} ({'compute' if target == 'y' else 'relay'})")
            placed = True
            break
        if not placed:
            raise NoFeasibleStartError(f"No UAV or HAP quota left for GU {i} in slot {n + 1}")

    dec = OffloadDecision.from_yz(y, z)
    logger.info(f"[init] {int(dec.x.sum())} of {num_gus * num_slots} task parts offloaded")
    return dec, traj, dists


def p3_inputs(
    dec: OffloadDecision,
    traj: TrajectoryPlan,
    model: CostModel,
    space: SampleSpace
) -> Tuple[np.ndarray, List[SideConstraint]]:
    """
    Cost matrix and expectation constraints of the worst-case problem at fixed (dec, traj).

    Constraints that cannot bind anywhere on the simplex are left out.

    Returns:
        ((I, K) costs, side constraints)
    """
    num_gus, num_slots = model.num_gus, model.num_slots
    rates = model.rates(traj)
    sv = space.slot_values(num_slots)
    unit = model.unit_delay(dec, rates)                          # (I, N)
    costs = unit.sum(axis=1)[:, None] * sv[None, :]
    side: List[SideConstraint] = []

    def add(label: str, coeffs: np.ndarray, rhs: float) -> None:
        if np.clip(coeffs, 0.0, None).max(axis=1).sum() > rhs:
            side.append(SideConstraint(label, coeffs, rhs))

    for i in range(num_gus):
        for n in range(num_slots):
            coeffs = np.zeros((num_gus, sv.size))
            coeffs[i] = unit[i, n] * sv
            add(f"delay[{i},{n}]", coeffs, model.slot_len)

    gu_bits = model.unit_gu_energy(dec, rates).sum(axis=1)       # (I,)
    for i in range(num_gus):
        coeffs = np.zeros((num_gus, sv.size))
        coeffs[i] = gu_bits[i] * sv
        add(f"gu_energy[{i}]", coeffs, float(model.budget_gu[i]))

    uav_bits = (model.unit_uav_compute_energy(dec) + model.unit_uav_relay_energy(dec, rates)).sum(axis=2)
    flight = model.flight(traj).sum(axis=1)
    for j in range(model.num_uavs):
        add(f"uav_energy[{j}]", uav_bits[:, j][:, None] * sv[None, :], float(model.budget_uav[j] - flight[j]))

    hap_bits = model.unit_hap_energy(dec).sum(axis=(1, 2))
    add("hap_energy", hap_bits[:, None] * sv[None, :], float(model.budget_hap))
    return costs, side


def _worst_case(
    dec: OffloadDecision,
    traj: TrajectoryPlan,
    model: CostModel,
    amb: AmbiguitySet,
    outer: int
) -> Tuple[WorstCase, bool]:
    costs, side = p3_inputs(dec, traj, model, amb.space)
    try:
        return worst_case_distribution(costs, amb, side), False
    except InfeasibleError:
        logger.warning(f"[drcoto r={outer}] side constraints exclude the ambiguity set, relaxing them")
        return worst_case_distribution(costs, amb), True


def drcoto_solve(
    scenario: Scenario,
    amb: AmbiguitySet,
    tolerances: Optional[Tolerances] = None
) -> SolveReport:
    """
    Minimize the worst-case expected total delay over the ambiguity set.

    Args:
        scenario: Validated scenario
        amb: Ambiguity set around the reference distributions
        tolerances: Stopping rules and warm-start flag

    Returns:
        SolveReport whose objective is the worst-case expected delay (s)

    Raises:
        NoFeasibleStartError: If no initial decision exists
    """
    tol = tolerances or Tolerances()
    started = time.perf_counter()
    model = CostModel(scenario)
    dec0, traj0, dists = initial_feasible(scenario, amb, model)
    cold = P2State(dec0, traj0)
    state = cold

    bound_log: List[BendersLogRow] = []
    benders_iters = sca_iters = collapses = 0
    side_relaxed = False
    monotone = True
    all_converged = True
    settled = False
    previous: Optional[float] = None
    p2: Optional[P2Result] = None
    wc: Optional[WorstCase] = None
    outer = 0

    while outer < tol.max_outer_iters:
        outer += 1
        p2 = solve_p2(dists, amb.space, model, state if tol.warm_start else cold, tol, outer=outer)
        benders_iters += p2.benders_iters
        sca_iters += p2.sca_iters
        collapses += p2.trust_region_collapses
        bound_log.extend(p2.bound_log)
        all_converged = all_converged and p2.converged

        inner = p2.evaluation.objective
        if previous is not None and inner > previous + MONOTONE_TOL * max(1.0, abs(previous)):
            monotone = False
            logger.warning(f"[drcoto r={outer}] P2 value {inner:.9g} above previous worst case {previous:.9g}")

        wc, relaxed = _worst_case(p2.decision, p2.trajectory, model, amb, outer)
        side_relaxed = side_relaxed or relaxed
        if wc.objective < inner - MONOTONE_TOL * max(1.0, abs(inner)):
            monotone = False
            logger.warning(f"[drcoto r={outer}] worst case {wc.objective:.9g} below P2 value {inner:.9g}")
        logger.info(f"[drcoto r={outer}] P2={inner:.9g} worst-case={wc.objective:.9g}")

        if same_distributions(wc.dists, dists):
            settled = True
            break
        if previous is not None and abs(wc.objective - previous) <= tol.outer_tol:
            settled = True
            break
        previous = wc.objective
        dists = wc.dists
        state = p2.state

    converged = settled and all_converged
    if not converged:
        logger.warning(f"[drcoto] finished without full convergence after {outer} outer iterations")
    return SolveReport(
        method="drcoto",
        objective=wc.objective,
        decisions=p2.decision,
        trajectories=p2.trajectory,
        worst_dists=wc.dists,
        ub_trace=list(p2.ub_trace),
        lb_trace=list(p2.lb_trace),
        outer_iters=outer,
        benders_iters=benders_iters,
        sca_iters=sca_iters,
        wall_time=time.perf_counter() - started,
        converged=converged,
        bound_log=bound_log,
        trust_region_collapses=collapses,
        side_relaxed=side_relaxed,
        outer_monotone=monotone,
        notes=p2.notes,
    )
