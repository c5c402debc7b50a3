"""Fixed-distribution comparison methods (deterministic, stochastic, robust)."""
import logging
import time
from typing import Optional, Tuple

import numpy as np

from src.models.reports import BaselineMode, SolveReport, Tolerances
from src.models.scenario import Scenario
from src.models.uncertainty import AmbiguitySet, Distribution
from src.physics.costs import CostModel
from src.services.benders_service import P2State, solve_p2
from src.services.drcoto_service import initial_feasible

logger = logging.getLogger(__name__)


def baseline_distributions(mode: BaselineMode, amb: AmbiguitySet) -> Tuple[Distribution, ...]:
    """
    Distributions each baseline plans against.

    DO: unit mass on the sample value nearest each reference mean (lower value on ties).
    SO: the references. RO: unit mass on the largest sample value.
    """
    mode = BaselineMode(mode)
    values = amb.space.values
    size = amb.space.size
    if mode is BaselineMode.SO:
        return amb.references
    if mode is BaselineMode.RO:
        return tuple(Distribution.point_mass(size, size - 1) for _ in amb.references)
    nearest = []
    for ref in amb.references:
        index = int(np.argmin(np.abs(values - ref.mean(values))))
        nearest.append(Distribution.point_mass(size, index))
    return tuple(nearest)


class BaselineService:
    """Runs one Benders solve under a fixed distribution rule."""

    def solve(
        self,
        mode: BaselineMode,
        scenario: Scenario,
        amb: AmbiguitySet,
        tolerances: Optional[Tolerances] = None
    ) -> SolveReport:
        """
        Solve a baseline.

        Args:
            mode: Which distribution rule to apply
            scenario: Validated scenario
            amb: Ambiguity set (its references and sample space are used)
            tolerances: Stopping rules

        Returns:
            SolveReport whose objective is the expected delay under the fixed distributions
        """
        tol = tolerances or Tolerances()
        mode = BaselineMode(mode)
        started = time.perf_counter()
        model = CostModel(scenario)
        dec0, traj0, _ = initial_feasible(scenario, amb, model)
        dists = baseline_distributions(mode, amb)
        p2 = solve_p2(dists, amb.space, model, P2State(dec0, traj0), tol)
        logger.info(f"[{mode.value}] objective={p2.evaluation.objective:.9g} converged={p2.converged}")
        return SolveReport(
            method=mode.value,
            objective=p2.evaluation.objective,
            decisions=p2.decision,
            trajectories=p2.trajectory,
            worst_dists=dists,
            ub_trace=list(p2.ub_trace),
            lb_trace=list(p2.lb_trace),
            outer_iters=1,
            benders_iters=p2.benders_iters,
            sca_iters=p2.sca_iters,
            wall_time=time.perf_counter() - started,
            converged=p2.converged,
            bound_log=list(p2.bound_log),
            trust_region_collapses=p2.trust_region_collapses,
            notes=p2.notes,
        )


baseline_service = BaselineService()


def solve_baseline(
    mode: BaselineMode,
    scenario: Scenario,
    amb: AmbiguitySet,
    tolerances: Optional[Tolerances] = None
) -> SolveReport:
    return baseline_service.solve(mode, scenario, amb, tolerances)
