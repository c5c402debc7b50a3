"""Trajectory subproblem: trust-region successive linear programming over UAV waypoints.

For fixed offloading decisions and distributions, the delay objective and the
trajectory-dependent expectation constraints are linearized around a reference
trajectory. The linear model is solved as an LP whose variables are waypoint
displacements plus penalized slacks, and a step is kept only when the exact penalized
objective improves.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.models.plans import OffloadDecision, TrajectoryPlan
from src.models.reports import Tolerances
from src.physics.costs import CostModel, Evaluation, RateField
from src.solvers.lp import LpBuilder, LpProblem, LpSolution, Relation, Sense, solve_lp

logger = logging.getLogger(__name__)

PREDICTION_TOL = 1e-12
ACTIVE_TOL = 1e-10
GRADIENT_RTOL = 1e-4
SPEED_RTOL = 1e-9
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class Multipliers:
    """Nonnegative prices of the penalized expectation constraints, each at most the penalty."""

    tau: np.ndarray   # (I, N)
    gu: np.ndarray    # (I,)
    uav: np.ndarray   # (J,)

    @classmethod
    def zeros(cls, num_gus: int, num_uavs: int, num_slots: int) -> "Multipliers":
        return cls(np.zeros((num_gus, num_slots)), np.zeros(num_gus), np.zeros(num_uavs))


@dataclass(frozen=True)
class SubproblemModel:
    """Linearized subproblem around ``reference`` with the index maps needed to read it back."""

    lp: LpProblem
    reference: TrajectoryPlan
    free_index: np.ndarray                  # (J, N - 1, 2) LP column of each displacement
    objective_gradient: np.ndarray          # (J, N - 1, 2)
    tau_rows: Dict[Tuple[int, int], int]
    gu_rows: Dict[int, int]
    uav_rows: Dict[int, int]
    penalized_rhs: np.ndarray               # rhs of every slack-carrying row

    def trajectory(self, primal: np.ndarray, area: np.ndarray) -> TrajectoryPlan:
        free = self.reference.waypoints[:, 1:-1, :] + primal[self.free_index]
        return self.reference.with_free(np.clip(free, 0.0, area))

    def model_merit_at_reference(self, penalty: float) -> float:
        """Value of the LP objective at zero displacement with the smallest feasible slacks."""
        return self.lp.offset + penalty * float(np.clip(-self.penalized_rhs, 0.0, None).sum())


@dataclass
class SpResult:
    """Outcome of one trajectory subproblem solve."""

    trajectory: TrajectoryPlan
    value: float
    evaluation: Evaluation
    multipliers: Multipliers
    iterations: int
    collapsed: bool = False
    merit_history: List[float] = field(default_factory=list)


def _delay_sensitivity(dec: OffloadDecision, sizes: np.ndarray, rates: RateField) -> np.ndarray:
    """(I, J, N, 2) derivative of sbar_i * A_in with respect to UAV j's slot-n waypoint."""
    x = dec.x[..., None].astype(float)
    z = dec.z[..., None].astype(float)
    return sizes[:, None, None, None] * (x * rates.grad_inv_ug + z * rates.grad_inv_uh[None, ...])


def objective_gradient(
    model: CostModel,
    dec: OffloadDecision,
    traj: TrajectoryPlan,
    sizes: np.ndarray,
    rates: Optional[RateField] = None
) -> np.ndarray:
    """
    Analytic gradient of the expected total delay with respect to the free waypoints.

    Returns:
        (J, N - 1, 2) array
    """
    rates = rates if rates is not None and rates.grad_inv_ug is not None else model.rates(traj, with_gradient=True)
    per_slot = _delay_sensitivity(dec, np.asarray(sizes, dtype=float), rates).sum(axis=0)
    return per_slot[:, :-1, :]


def finite_difference_gradient(
    model: CostModel,
    dec: OffloadDecision,
    traj: TrajectoryPlan,
    sizes: np.ndarray,
    step: float = 1e-3
) -> np.ndarray:
    """Central-difference gradient of the expected total delay over the free waypoints."""
    free = traj.waypoints[:, 1:-1, :]
    grad = np.zeros_like(free)
    for index in np.ndindex(free.shape):
        shifted = free.copy()
        shifted[index] += step
        up = model.total_delay(dec, traj.with_free(shifted), sizes)
        shifted[index] -= 2.0 * step
        down = model.total_delay(dec, traj.with_free(shifted), sizes)
        grad[index] = (up - down) / (2.0 * step)
    return grad


def gradient_mismatch(
    model: CostModel,
    dec: OffloadDecision,
    traj: TrajectoryPlan,
    sizes: np.ndarray
) -> float:
    """Largest relative deviation between the analytic and central-difference gradients."""
    analytic = objective_gradient(model, dec, traj, sizes)
    numeric = finite_difference_gradient(model, dec, traj, sizes)
    scale = max(float(np.abs(numeric).max(initial=0.0)), 1e-300)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def linearize_sp(
    traj_ref: TrajectoryPlan,
    dec: OffloadDecision,
    sizes: np.ndarray,
    model: CostModel,
    trust_radius: float,
    penalty: float,
    polygon_sides: int = 16
) -> SubproblemModel:
    """
    First-order model of the trajectory subproblem at ``traj_ref``.

    Args:
        traj_ref: Reference trajectory (expansion point)
        dec: Fixed offloading decision
        sizes: (I,) expected per-slot task sizes in bits
        model: Cost model of the scenario
        trust_radius: Per-coordinate displacement bound in meters
        penalty: Cost per unit slack of the expectation constraints
        polygon_sides: Facets of the polygon replacing the per-slot speed disc

    Returns:
        SubproblemModel whose LP offset equals the exact objective at ``traj_ref``
    """
    sizes = np.asarray(sizes, dtype=float)
    num_gus, num_uavs, num_slots = model.num_gus, model.num_uavs, model.num_slots
    rates = model.rates(traj_ref, with_gradient=True)
    ev = model.evaluate(dec, traj_ref, sizes, rates)
    wp = traj_ref.waypoints
    free = wp[:, 1:-1, :]
    area = np.array([model.scenario.area_x, model.scenario.area_y])

    builder = LpBuilder()
    sens = _delay_sensitivity(dec, sizes, rates)              # (I, J, N, 2)
    grad = sens.sum(axis=0)[:, :-1, :]
    lower = np.minimum(np.maximum(-trust_radius, -free), 0.0)
    upper = np.maximum(np.minimum(trust_radius, area - free), 0.0)
    idx = builder.add_variables(free.size, lower.ravel(), upper.ravel(), grad.ravel(), prefix="dq")
    idx = idx.reshape(free.shape)
    penalized_rhs: List[float] = []

    def penalized_row(columns: List[int], values: List[float], rhs: float, label: str) -> int:
        slack = builder.add_variable(0.0, np.inf, penalty, label=f"slack:{label}")
        penalized_rhs.append(rhs)
        return builder.add_row(columns + [slack], values + [-1.0], Relation.LE, rhs, label=label)

    # Expected delay per task part.
    tau_rows: Dict[Tuple[int, int], int] = {}
    offloaded = dec.offloaded()
    for i, n in zip(*np.nonzero(offloaded[:, :-1])):
        cols = idx[:, n, :].ravel().tolist()
        vals = sens[i, :, n, :].ravel().tolist()
        tau_rows[(int(i), int(n))] = penalized_row(cols, vals, -float(ev.g_tau[i, n]), f"delay[{i},{n}]")

    # GU energy (uplink part depends on the trajectory).
    gu_rows: Dict[int, int] = {}
    uplink = (sizes * model.p_gu)[:, None, None, None] * dec.x[..., None] * rates.grad_inv_ug
    for i in np.flatnonzero(dec.x[:, :, :-1].any(axis=(1, 2))):
        cols = idx.ravel().tolist()
        vals = uplink[i, :, :-1, :].ravel().tolist()
        gu_rows[int(i)] = penalized_row(cols, vals, -float(ev.g_gu[i]), f"gu_energy[{i}]")

    # UAV energy: relay transmission plus propulsion.
    uav_rows: Dict[int, int] = {}
    relay = (
        (sizes[:, None, None] * dec.z).sum(axis=0)[..., None]
        * model.p_uav[:, None, None]
        * rates.grad_inv_uh
    )                                                          # (J, N, 2)
    fly = model.flight_gradient(traj_ref)                      # (J, N, 2)
    fly_free = fly[:, :-1, :] - fly[:, 1:, :]                  # (J, N - 1, 2)
    for j in range(num_uavs):
        vals = (relay[j, :-1, :] + fly_free[j]).ravel().tolist()
        uav_rows[j] = penalized_row(idx[j].ravel().tolist(), vals, -float(ev.g_uav[j]), f"uav_energy[{j}]")

    _add_speed_rows(builder, idx, wp, model, trust_radius, polygon_sides)
    _add_separation_rows(builder, idx, wp, model.scenario.min_separation, trust_radius)

    lp = builder.build(sense=Sense.MIN, offset=ev.objective)
    return SubproblemModel(
        lp=lp,
        reference=traj_ref,
        free_index=idx,
        objective_gradient=grad,
        tau_rows=tau_rows,
        gu_rows=gu_rows,
        uav_rows=uav_rows,
        penalized_rhs=np.array(penalized_rhs),
    )


def within_speed(traj: TrajectoryPlan, model: CostModel) -> bool:
    """Every step within ``v * tau`` of its UAV."""
    limit = model.speed[:, None] * model.slot_len * (1.0 + SPEED_RTOL)
    return bool((traj.steps() <= limit).all())


def _add_speed_rows(
    builder: LpBuilder,
    idx: np.ndarray,
    wp: np.ndarray,
    model: CostModel,
    trust_radius: float,
    sides: int
) -> None:
    """
    Polygonal version of ``||q_n - q_{n-1}|| <= v * tau`` per UAV and slot.

    Facets sit at the inscribed apothem unless the reference step already lies beyond
    one; that facet is moved out to the step so the reference stays feasible. Candidates
    are checked against the exact limit afterwards.
    """
    angles = (np.arange(sides) + 0.5) * 2.0 * math.pi / sides
    normals = np.column_stack([np.cos(angles), np.sin(angles)])
    num_slots = wp.shape[1] - 1
    for j in range(wp.shape[0]):
        apothem = model.speed[j] * model.slot_len * math.cos(math.pi / sides)
        for s in range(num_slots):
            head = idx[j, s] if s + 1 <= num_slots - 1 else None      # waypoint s + 1
            tail = idx[j, s - 1] if s >= 1 else None                  # waypoint s
            if head is None and tail is None:
                continue
            reach = (2.0 if head is not None and tail is not None else 1.0) * _SQRT2 * trust_radius
            step = wp[j, s + 1] - wp[j, s]
            for k, u in enumerate(normals):
                along = float(u @ step)
                slack = max(apothem, along) - along
                if slack >= reach:
                    continue
                cols: List[int] = []
                vals: List[float] = []
                if head is not None:
                    cols += head.tolist()
                    vals += u.tolist()
                if tail is not None:
                    cols += tail.tolist()
                    vals += (-u).tolist()
                builder.add_row(cols, vals, Relation.LE, slack, label=f"speed[{j},{s},{k}]")


def _add_separation_rows(
    builder: LpBuilder,
    idx: np.ndarray,
    wp: np.ndarray,
    min_separation: float,
    trust_radius: float
) -> None:
    """Linearized ``||q_j - q_j'|| >= D_min`` at every free waypoint."""
    num_uavs = wp.shape[0]
    for w in range(1, wp.shape[1] - 1):
        for j in range(num_uavs):
            for jj in range(j + 1, num_uavs):
                diff = wp[j, w] - wp[jj, w]
                dist = float(np.linalg.norm(diff))
                if dist - 2.0 * _SQRT2 * trust_radius >= min_separation:
                    continue
                e = diff / dist if dist > 0.0 else np.array([1.0, 0.0])
                cols = idx[j, w - 1].tolist() + idx[jj, w - 1].tolist()
                vals = e.tolist() + (-e).tolist()
                builder.add_row(cols, vals, Relation.GE, min_separation - dist, label=f"sep[{j},{jj},{w}]")


def _project_multipliers(
    ev: Evaluation,
    sub: Optional[SubproblemModel],
    solution: Optional[LpSolution],
    penalty: float
) -> Multipliers:
    """
    Price every expectation constraint: full penalty when violated, zero when slack,
    and the (clipped) LP dual when numerically active.
    """

    def price(g: float, row: Optional[int]) -> float:
        if g > 0.0:
            return penalty
        if g < -ACTIVE_TOL or row is None or solution is None:
            return 0.0
        return float(np.clip(-solution.duals[row], 0.0, penalty))

    usable = sub is not None and solution is not None and solution.is_optimal
    tau = np.zeros_like(ev.g_tau)
    for (i, n), g in np.ndenumerate(ev.g_tau):
        row = sub.tau_rows.get((i, n)) if usable else None
        tau[i, n] = price(float(g), row)
    gu = np.array([
        price(float(g), sub.gu_rows.get(i) if usable else None) for i, g in enumerate(ev.g_gu)
    ])
    uav = np.array([
        price(float(g), sub.uav_rows.get(j) if usable else None) for j, g in enumerate(ev.g_uav)
    ])
    return Multipliers(tau=tau, gu=gu, uav=uav)


def solve_sp(
    dec: OffloadDecision,
    sizes: np.ndarray,
    traj_init: TrajectoryPlan,
    model: CostModel,
    tolerances: Optional[Tolerances] = None
) -> SpResult:
    """
    Optimize the trajectory for a fixed decision by trust-region successive linearization.

    Args:
        dec: Fixed offloading decision
        sizes: (I,) expected per-slot task sizes in bits
        traj_init: Starting trajectory (must satisfy the trajectory constraints)
        model: Cost model of the scenario
        tolerances: Stopping rules

    Returns:
        SpResult whose ``value`` is the penalized exact objective at the final trajectory
    """
    tol = tolerances or Tolerances()
    sizes = np.asarray(sizes, dtype=float)
    area = np.array([model.scenario.area_x, model.scenario.area_y])
    initial_radius = float(model.speed.min() * model.slot_len / 2.0)
    radius = initial_radius

    traj = traj_init
    ev = model.evaluate(dec, traj, sizes)
    merit = ev.merit(tol.penalty)
    history = [merit]
    iterations = 0
    collapsed = False
    has_free = model.num_slots > 1

    while has_free and iterations < tol.max_sca_iters:
        iterations += 1
        sub = linearize_sp(traj, dec, sizes, model, radius, tol.penalty, tol.polygon_sides)
        if tol.gradient_check:
            mismatch = gradient_mismatch(model, dec, traj, sizes)
            if mismatch > GRADIENT_RTOL:
                logger.warning(f"[sca] analytic gradient off by {mismatch:.2e} (relative)")
        solution = solve_lp(sub.lp)
        if not solution.is_optimal:
            logger.warning(f"[sca m={iterations}] LP {solution.status.value}, shrinking trust region")
            radius /= 2.0
            if radius < tol.min_trust_radius:
                collapsed = True
                break
            continue

        predicted = sub.model_merit_at_reference(tol.penalty) - solution.objective
        if predicted <= PREDICTION_TOL * max(1.0, abs(merit)):
            logger.debug(f"[sca m={iterations}] stationary (predicted {predicted:.2e})")
            break

        candidate = sub.trajectory(solution.primal, area)
        cand_ev = model.evaluate(dec, candidate, sizes)
        cand_merit = cand_ev.merit(tol.penalty)
        if cand_merit < merit and within_speed(candidate, model):
            change = merit - cand_merit
            if change / predicted > 0.75:
                radius = min(2.0 * radius, initial_radius)
            traj, ev, merit = candidate, cand_ev, cand_merit
            history.append(merit)
            logger.debug(f"[sca m={iterations}] accepted merit={merit:.9g} radius={radius:.3g}")
            if change <= tol.sca_tol:
                break
        else:
            radius /= 2.0
            logger.debug(f"[sca m={iterations}] rejected, radius={radius:.3g}")
            if radius < tol.min_trust_radius:
                collapsed = True
                logger.warning(f"[sca m={iterations}] trust region collapsed at merit={merit:.9g}")
                break

    final_sub: Optional[SubproblemModel] = None
    final_solution: Optional[LpSolution] = None
    if has_free:
        final_sub = linearize_sp(
            traj, dec, sizes, model, max(radius, tol.min_trust_radius), tol.penalty, tol.polygon_sides
        )
        final_solution = solve_lp(final_sub.lp)
    multipliers = _project_multipliers(ev, final_sub, final_solution, tol.penalty)

    return SpResult(
        trajectory=traj,
        value=merit,
        evaluation=ev,
        multipliers=multipliers,
        iterations=max(iterations, 1),
        collapsed=collapsed,
        merit_history=history,
    )
