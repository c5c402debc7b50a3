"""Benders decomposition of the fixed-distribution problem.

The master problem chooses binary compute/relay tensors ``(y, z)`` (with ``x = y + z``)
under the quota and optimistic resource constraints; the trajectory subproblem prices each
proposal and returns an optimality cut.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.models.plans import OffloadDecision, TrajectoryPlan
from src.models.reports import BendersCut, BendersLogRow, Tolerances
from src.models.uncertainty import Distribution, SampleSpace, mean_sizes
from src.physics.costs import CostModel, Evaluation, RateBounds
from src.services.trajectory_service import SpResult, solve_sp
from src.solvers.lp import LpBuilder, Relation, Sense
from src.solvers.milp import MilpProblem, MilpSolution, MilpStatus, solve_milp

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class P2State:
    """Decision and trajectory a Benders run starts from."""

    decision: OffloadDecision
    trajectory: TrajectoryPlan


@dataclass
class P2Result:
    """Best decision/trajectory found for one set of distributions."""

    decision: OffloadDecision
    trajectory: TrajectoryPlan
    value: float
    evaluation: Evaluation
    ub_trace: List[float]
    lb_trace: List[float]
    benders_iters: int
    sca_iters: int
    converged: bool
    trust_region_collapses: int = 0
    bound_log: List[BendersLogRow] = field(default_factory=list)
    notes: Optional[str] = None

    @property
    def state(self) -> P2State:
        return P2State(self.decision, self.trajectory)


@dataclass(frozen=True)
class OptimisticTerms:
    """Per-bit costs of each (y, z) indicator with every link at the best rate its UAV can reach."""

    delay_y: np.ndarray        # (I, J, N) change of A_in when (i, j, n) is computed on the UAV
    delay_z: np.ndarray        # (I, J, N) same when relayed to the HAP
    gu_energy_x: np.ndarray    # (I, J, N) change of GU energy per bit when offloaded
    uav_energy_y: np.ndarray   # (I, J)
    uav_energy_z: np.ndarray   # (I, J, N)
    min_flight: np.ndarray     # (J,)

    @classmethod
    def from_model(cls, model: CostModel, bounds: Optional[RateBounds] = None) -> "OptimisticTerms":
        bounds = bounds or model.reach_rate_bounds()
        inv_ug = bounds.inv_ug_lo                                            # (I, J, N)
        inv_uh = bounds.inv_uh_lo                                            # (J, N)
        leave = inv_ug - model.local_delay[:, None, None]
        return cls(
            delay_y=leave + model.uav_delay[:, :, None],
            delay_z=leave + inv_uh[None, :, :] + model.hap_delay[:, None, None],
            gu_energy_x=model.p_gu[:, None, None] * inv_ug - model.local_energy[:, None, None],
            uav_energy_y=model.uav_energy,
            uav_energy_z=np.broadcast_to((model.p_uav[:, None] * inv_uh)[None, :, :], inv_ug.shape),
            min_flight=model.min_flight_energy(),
        )


def build_benders_cut(
    sp: SpResult,
    dec_ref: OffloadDecision,
    sizes: np.ndarray,
    model: CostModel,
    bounds: Optional[RateBounds] = None
) -> BendersCut:
    """
    Optimality cut from a converged trajectory subproblem.

    The Lagrangian of the penalized subproblem is linear in (y, z) for a fixed
    trajectory; only the reciprocal uplink and relay rates in its coefficients depend on
    where the UAVs fly. Each indicator that ``dec_ref`` leaves off is priced at the best
    rate any admissible trajectory reaches, each indicator it sets at the worst, so the
    cut stays below the Lagrangian of every (decision, trajectory) pair and equals the
    subproblem's Lagrangian value at ``dec_ref``.

    Args:
        sp: Subproblem result (trajectory, multipliers)
        dec_ref: Decision the subproblem was solved for
        sizes: (I,) expected per-slot task sizes in bits
        model: Cost model of the scenario
        bounds: Reachable-rate bounds, computed from ``model`` when omitted

    Returns:
        BendersCut
    """
    bounds = bounds or model.reach_rate_bounds()
    sizes = np.asarray(sizes, dtype=float)
    lam = sp.multipliers
    rates = model.rates(sp.trajectory)
    ev = sp.evaluation

    w = (sizes[:, None] * (1.0 + lam.tau))[:, None, :]                     # (I, 1, N)
    sz3 = sizes[:, None, None]
    gu_price = (lam.gu * sizes)[:, None, None]
    uav_price = lam.uav[None, :, None] * sz3                                 # (I, J, 1)
    uplink_weight = w + gu_price * model.p_gu[:, None, None]
    relay_weight = w + uav_price * model.p_uav[None, :, None]
    leave = -w * model.local_delay[:, None, None] - gu_price * model.local_energy[:, None, None]
    compute = w * model.uav_delay[:, :, None] + uav_price * model.uav_energy[:, :, None]
    forward = w * model.hap_delay[:, None, None]

    def slopes(inv_ug: np.ndarray, inv_uh: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        uplink = leave + uplink_weight * inv_ug
        return uplink + compute, uplink + forward + relay_weight * inv_uh[None, :, :]

    at_y, at_z = slopes(rates.inv_ug, rates.inv_uh)
    lo_y, lo_z = slopes(bounds.inv_ug_lo, bounds.inv_uh_lo)
    hi_y, hi_z = slopes(bounds.inv_ug_hi, bounds.inv_uh_hi)
    slope_y = np.where(dec_ref.y > 0, np.maximum(hi_y, at_y), np.minimum(lo_y, at_y))
    slope_z = np.where(dec_ref.z > 0, np.maximum(hi_z, at_z), np.minimum(lo_z, at_z))

    value = (
        ev.objective
        + float((lam.tau * ev.g_tau).sum())
        + float((lam.gu * ev.g_gu).sum())
        + float((lam.uav * ev.g_uav).sum())
    )
    return BendersCut.at_reference(value, slope_y, slope_z, dec_ref)


@dataclass(frozen=True)
class MasterProblem:
    """Assembled master MILP with its column layout."""

    milp: MilpProblem
    y_index: np.ndarray
    z_index: np.ndarray
    xi_index: int

    def decision(self, assignment: np.ndarray) -> OffloadDecision:
        y = np.round(assignment[self.y_index]).astype(np.int8)
        z = np.round(assignment[self.z_index]).astype(np.int8)
        return OffloadDecision.from_yz(y, z)

    def point(self, dec: OffloadDecision, xi: float) -> np.ndarray:
        vec = np.zeros(self.milp.base.num_vars)
        vec[self.y_index] = dec.y
        vec[self.z_index] = dec.z
        vec[self.xi_index] = xi
        return vec


def _add_bounded_row(
    builder: LpBuilder,
    cols: np.ndarray,
    vals: np.ndarray,
    rhs: float,
    most: float,
    label: str
) -> None:
    """Add ``vals . v <= rhs`` unless ``most``, the largest admissible left side, already fits."""
    if most <= rhs:
        return
    keep = vals != 0.0
    builder.add_row(cols[keep], vals[keep], Relation.LE, rhs, label=label)


def standing_cut(sizes: np.ndarray, model: CostModel, terms: OptimisticTerms) -> Tuple[float, np.ndarray, np.ndarray]:
    """Trajectory-free lower bound on the expected delay: (constant, coeff_y, coeff_z)."""
    sizes = np.asarray(sizes, dtype=float)
    coeff_y = sizes[:, None, None] * terms.delay_y
    coeff_z = sizes[:, None, None] * terms.delay_z
    constant = float((sizes * model.local_delay).sum()) * model.num_slots
    return constant, coeff_y, coeff_z


def build_master(
    model: CostModel,
    sizes: np.ndarray,
    cuts: List[BendersCut],
    terms: Optional[OptimisticTerms] = None
) -> MasterProblem:
    """
    Master MILP over binary (y, z) and the epigraph variable xi.

    Rows: one collection per task part, UAV compute quota, HAP relay quota, optimistic
    delay/GU-energy/UAV-energy bounds (best-case rates, shortest flight), exact HAP energy,
    the standing delay bound and every accumulated cut.
    """
    sizes = np.asarray(sizes, dtype=float)
    terms = terms or OptimisticTerms.from_model(model)
    num_gus, num_uavs, num_slots = model.num_gus, model.num_uavs, model.num_slots
    shape = (num_gus, num_uavs, num_slots)
    tau = model.slot_len

    builder = LpBuilder()
    count = num_gus * num_uavs * num_slots
    y = builder.add_variables(count, 0.0, 1.0, 0.0, prefix="y").reshape(shape)
    z = builder.add_variables(count, 0.0, 1.0, 0.0, prefix="z").reshape(shape)
    xi = builder.add_variable(0.0, np.inf, 1.0, label="xi")

    for i in range(num_gus):
        for n in range(num_slots):
            cols = np.concatenate([y[i, :, n], z[i, :, n]])
            builder.add_row(cols, np.ones(cols.size), Relation.LE, 1.0, label=f"collect[{i},{n}]")
    for j in range(num_uavs):
        if model.quota_uav[j] >= num_gus:
            continue
        for n in range(num_slots):
            builder.add_row(y[:, j, n], np.ones(num_gus), Relation.LE, model.quota_uav[j], label=f"uav_quota[{j},{n}]")
    if model.quota_hap < num_gus:
        for n in range(num_slots):
            cols = z[:, :, n].ravel()
            builder.add_row(cols, np.ones(cols.size), Relation.LE, model.quota_hap, label=f"hap_quota[{n}]")

    # Optimistic delay per task part.
    for i in range(num_gus):
        rhs = tau - sizes[i] * model.local_delay[i]
        for n in range(num_slots):
            vals = sizes[i] * np.concatenate([terms.delay_y[i, :, n], terms.delay_z[i, :, n]])
            most = max(0.0, float(vals.max()))
            cols = np.concatenate([y[i, :, n], z[i, :, n]])
            _add_bounded_row(builder, cols, vals, rhs, most, f"delay_opt[{i},{n}]")

    # Optimistic GU energy.
    for i in range(num_gus):
        per_part = sizes[i] * terms.gu_energy_x[i]                       # (J, N)
        base = sizes[i] * model.local_energy[i] * num_slots
        cols = np.concatenate([y[i].ravel(), z[i].ravel()])
        vals = np.concatenate([per_part.ravel(), per_part.ravel()])
        most = float(np.clip(per_part.max(axis=0), 0.0, None).sum())
        _add_bounded_row(builder, cols, vals, model.budget_gu[i] - base, most, f"gu_energy_opt[{i}]")

    # Optimistic UAV energy.
    for j in range(num_uavs):
        vy = np.repeat((sizes * terms.uav_energy_y[:, j])[:, None], num_slots, axis=1)
        vz = sizes[:, None] * terms.uav_energy_z[:, j, :]
        cols = np.concatenate([y[:, j, :].ravel(), z[:, j, :].ravel()])
        vals = np.concatenate([vy.ravel(), vz.ravel()])
        rhs = model.budget_uav[j] - terms.min_flight[j]
        _add_bounded_row(builder, cols, vals, rhs, float(np.clip(vals, 0.0, None).sum()), f"uav_energy_opt[{j}]")

    # HAP energy, exact.
    vals = np.repeat((sizes * model.hap_energy)[:, None, None], num_uavs, axis=1)
    vals = np.repeat(vals, num_slots, axis=2).ravel()
    _add_bounded_row(builder, z.ravel(), vals, model.budget_hap, float(vals.sum()), "hap_energy")

    constant, cy, cz = standing_cut(sizes, model, terms)
    _add_cut_row(builder, y, z, xi, constant, cy, cz, "standing")
    for k, cut in enumerate(cuts):
        constant, cy, cz = cut.master_terms()
        _add_cut_row(builder, y, z, xi, constant, cy, cz, f"cut[{k}]")

    lp = builder.build(sense=Sense.MIN)
    mask = np.zeros(lp.num_vars, dtype=bool)
    mask[y.ravel()] = True
    mask[z.ravel()] = True
    return MasterProblem(milp=MilpProblem(lp, mask), y_index=y, z_index=z, xi_index=xi)


def _add_cut_row(
    builder: LpBuilder,
    y: np.ndarray,
    z: np.ndarray,
    xi: int,
    constant: float,
    coeff_y: np.ndarray,
    coeff_z: np.ndarray,
    label: str
) -> None:
    """``xi >= constant + coeff_y . y + coeff_z . z``."""
    cols = np.concatenate([[xi], y.ravel(), z.ravel()])
    vals = np.concatenate([[-1.0], coeff_y.ravel(), coeff_z.ravel()])
    builder.add_row(cols, vals, Relation.LE, -constant, label=label)


def _epigraph_value(
    dec: OffloadDecision,
    sizes: np.ndarray,
    model: CostModel,
    terms: OptimisticTerms,
    cuts: List[BendersCut]
) -> float:
    constant, cy, cz = standing_cut(sizes, model, terms)
    value = constant + float((cy * dec.y).sum() + (cz * dec.z).sum())
    for cut in cuts:
        value = max(value, cut.evaluate(dec))
    return max(value, 0.0)


def solve_master(
    model: CostModel,
    sizes: np.ndarray,
    cuts: List[BendersCut],
    tolerances: Tolerances,
    hint: Optional[OffloadDecision] = None,
    terms: Optional[OptimisticTerms] = None
) -> Tuple[MasterProblem, MilpSolution]:
    terms = terms or OptimisticTerms.from_model(model)
    master = build_master(model, sizes, cuts, terms)
    incumbent = None
    if hint is not None:
        incumbent = master.point(hint, _epigraph_value(hint, sizes, model, terms, cuts))
    solution = solve_milp(master.milp, node_limit=tolerances.node_limit, incumbent=incumbent)
    return master, solution


def _key(dec: OffloadDecision) -> bytes:
    return dec.x.tobytes() + dec.y.tobytes() + dec.z.tobytes()


def solve_p2(
    dists: Tuple[Distribution, ...],
    space: SampleSpace,
    model: CostModel,
    start: P2State,
    tolerances: Optional[Tolerances] = None,
    outer: int = 0
) -> P2Result:
    """
    Benders loop for fixed distributions.

    Every subproblem starts from ``start.trajectory``; the first proposal is
    ``start.decision``.

    Args:
        dists: Per-GU task-size distributions
        space: Sample space the distributions live on
        model: Cost model of the scenario
        start: Initial decision and base trajectory
        tolerances: Stopping rules
        outer: Outer iteration number (for logs)

    Returns:
        P2Result with the best decision found and monotone bound traces
    """
    tol = tolerances or Tolerances()
    sizes = mean_sizes(dists, space, model.num_slots)
    bounds = model.reach_rate_bounds()
    terms = OptimisticTerms.from_model(model, bounds)
    base = start.trajectory

    upper, lower = np.inf, 0.0
    best: Optional[Tuple[OffloadDecision, SpResult]] = None
    cuts: List[BendersCut] = []
    visited: Dict[bytes, float] = {}
    ub_trace: List[float] = []
    lb_trace: List[float] = []
    log: List[BendersLogRow] = []
    sca_iters = 0
    collapses = 0
    converged = False
    notes: Optional[str] = None
    dec = start.decision
    iteration = 0

    while iteration < tol.max_benders_iters:
        iteration += 1
        sp = solve_sp(dec, sizes, base, model, tol)
        visited[_key(dec)] = sp.value
        sca_iters += sp.iterations
        collapses += int(sp.collapsed)
        if sp.value < upper:
            upper, best = sp.value, (dec, sp)
        cuts.append(build_benders_cut(sp, dec, sizes, model, bounds))

        stop = upper - lower <= tol.benders_tol
        next_dec: Optional[OffloadDecision] = None
        if not stop:
            master, mp = solve_master(model, sizes, cuts, tol, hint=best[0], terms=terms)
            if mp.status is MilpStatus.INFEASIBLE:
                notes = "master problem infeasible"
                logger.warning(f"[benders r={outer} w={iteration}] master infeasible, keeping best incumbent")
            else:
                if mp.best_bound > upper + 1e-7 * max(1.0, abs(upper)):
                    logger.warning(
                        f"[benders r={outer} w={iteration}] master bound {mp.best_bound:.9g} "
                        f"exceeds incumbent {upper:.9g}, capping lower bound"
                    )
                lower = max(lower, min(mp.best_bound, upper))
                next_dec = master.decision(mp.assignment)
                if mp.node_limit_reached:
                    logger.debug(f"[benders r={outer} w={iteration}] master stopped at node limit")

        ub_trace.append(upper)
        lb_trace.append(lower)
        log.append(BendersLogRow(outer, iteration, upper, lower, len(cuts), sp.iterations))
        logger.debug(f"[benders r={outer} w={iteration}] UB={upper:.9g} LB={lower:.9g} cuts={len(cuts)}")

        if upper - lower <= tol.benders_tol:
            converged = True
            break
        if next_dec is None:
            break
        if _key(next_dec) in visited:
            notes = "master repeated a visited decision"
            logger.warning(f"[benders r={outer} w={iteration}] master repeated a visited decision")
            break
        dec = next_dec

    if not converged:
        logger.warning(
            f"[benders r={outer}] stopped after {iteration} iterations with gap {upper - lower:.3g}"
        )
    best_dec, best_sp = best
    logger.info(
        f"[benders r={outer}] value={upper:.9g} iters={iteration} sca_iters={sca_iters} converged={converged}"
    )
    return P2Result(
        decision=best_dec,
        trajectory=best_sp.trajectory,
        value=upper,
        evaluation=best_sp.evaluation,
        ub_trace=ub_trace,
        lb_trace=lb_trace,
        benders_iters=iteration,
        sca_iters=sca_iters,
        converged=converged,
        trust_region_collapses=collapses,
        bound_log=log,
        notes=notes,
    )
