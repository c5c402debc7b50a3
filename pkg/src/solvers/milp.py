"""Best-bound branch and bound over binary variables."""
import heapq
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from src.config import settings
from src.solvers.lp import FEAS_TOL, LpProblem, LpStatus, Sense, solve_lp
from src.utils.exceptions import SolverError, ValidationError

logger = logging.getLogger(__name__)

INTEGRALITY_TOL = 1e-6
PRUNE_TOL = 1e-9


class MilpStatus(str, Enum):
    """Terminal state of a branch-and-bound search."""

    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class MilpProblem:
    """LP plus a mask of binary variables."""

    base: LpProblem
    binary_mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.binary_mask, dtype=bool).ravel()
        if mask.size != self.base.num_vars:
            raise ValidationError("Binary mask length does not match variable count")
        if np.any(self.base.lower[mask] < 0.0) or np.any(self.base.upper[mask] > 1.0):
            raise ValidationError("Binary variables must have bounds within [0, 1]")
        object.__setattr__(self, "binary_mask", mask)


@dataclass
class MilpSolution:
    """Result of :func:`solve_milp`.

    ``best_bound`` is a valid bound on the optimum in the problem's sense even when the
    node limit stops the search early (``node_limit_reached``).
    """

    status: MilpStatus
    assignment: np.ndarray
    objective: float
    nodes_explored: int
    best_bound: float
    node_limit_reached: bool = False
    incumbent_trace: List[float] = field(default_factory=list)
    bound_trace: List[float] = field(default_factory=list)


def _cutoff(best_val: float) -> float:
    if not np.isfinite(best_val):
        return np.inf
    return best_val - PRUNE_TOL * max(1.0, abs(best_val))


class BranchAndBound:
    """Best-bound search with most-fractional branching (ties to the lowest index)."""

    def __init__(self, node_limit: Optional[int] = None):
        self.node_limit = node_limit or settings.MILP_NODE_LIMIT

    def solve(self, problem: MilpProblem, incumbent: Optional[np.ndarray] = None) -> MilpSolution:
        base = problem.base
        mask = problem.binary_mask
        binaries = np.flatnonzero(mask)
        # Search runs in minimization form.
        sign = 1.0 if base.sense is Sense.MIN else -1.0

        best_x: Optional[np.ndarray] = None
        best_val = np.inf
        incumbent_trace: List[float] = []
        bound_trace: List[float] = []

        if incumbent is not None:
            candidate = np.asarray(incumbent, dtype=float)
            if self._is_feasible(problem, candidate):
                best_x = candidate.copy()
                best_val = sign * float(base.objective @ candidate + base.offset)
                incumbent_trace.append(sign * best_val)
            else:
                logger.debug("[milp] supplied incumbent rejected as infeasible")

        counter = 0
        heap: List[Tuple[float, int, np.ndarray, np.ndarray]] = [
            (-np.inf, counter, base.lower.copy(), base.upper.copy())
        ]
        nodes = 0
        limit_hit = False

        while heap:
            bound, _, lower, upper = heapq.heappop(heap)
            if bound >= _cutoff(best_val):
                # Best-first: everything left is at least as bad.
                heap.clear()
                break
            if nodes >= self.node_limit:
                heapq.heappush(heap, (bound, counter, lower, upper))
                limit_hit = True
                break
            nodes += 1

            solution = solve_lp(base.with_bounds(lower, upper))
            if solution.status is LpStatus.INFEASIBLE:
                bound_trace.append(self._global_bound(heap, best_val, sign))
                continue
            if solution.status is not LpStatus.OPTIMAL:
                raise SolverError(f"Node relaxation ended with status {solution.status.value}")

            value = sign * solution.objective
            if value < _cutoff(best_val):
                x = solution.primal
                frac = np.abs(x[binaries] - np.round(x[binaries]))
                if binaries.size == 0 or frac.max() <= INTEGRALITY_TOL:
                    x = x.copy()
                    x[binaries] = np.round(x[binaries])
                    best_x = x
                    best_val = value
                    incumbent_trace.append(sign * best_val)
                    logger.debug(f"[milp] node {nodes}: incumbent {sign * best_val:.9g}")
                else:
                    distance = np.minimum(x[binaries] - np.floor(x[binaries]), np.ceil(x[binaries]) - x[binaries])
                    k = int(binaries[int(np.argmax(distance))])
                    down_upper = upper.copy()
                    down_upper[k] = 0.0
                    up_lower = lower.copy()
                    up_lower[k] = 1.0
                    counter += 1
                    heapq.heappush(heap, (value, counter, lower.copy(), down_upper))
                    counter += 1
                    heapq.heappush(heap, (value, counter, up_lower, upper.copy()))
            bound_trace.append(self._global_bound(heap, best_val, sign))

        if best_x is None:
            if limit_hit:
                raise SolverError(f"Node limit {self.node_limit} reached without an incumbent")
            return MilpSolution(
                status=MilpStatus.INFEASIBLE,
                assignment=np.full(base.num_vars, np.nan),
                objective=float("nan"),
                nodes_explored=nodes,
                best_bound=float("nan"),
                incumbent_trace=incumbent_trace,
                bound_trace=bound_trace,
            )

        open_bound = min([entry[0] for entry in heap], default=np.inf)
        best_bound = min(open_bound, best_val)
        if limit_hit:
            logger.warning(
                f"[milp] node limit {self.node_limit} reached; gap "
                f"{best_val - best_bound:.3e}"
            )
        return MilpSolution(
            status=MilpStatus.OPTIMAL,
            assignment=best_x,
            objective=sign * best_val,
            nodes_explored=nodes,
            best_bound=sign * best_bound,
            node_limit_reached=limit_hit,
            incumbent_trace=incumbent_trace,
            bound_trace=bound_trace,
        )

    @staticmethod
    def _global_bound(heap, best_val: float, sign: float) -> float:
        open_bound = min([entry[0] for entry in heap], default=np.inf)
        return sign * min(open_bound, best_val)

    @staticmethod
    def _is_feasible(problem: MilpProblem, x: np.ndarray) -> bool:
        if x.shape != (problem.base.num_vars,):
            return False
        binary = x[problem.binary_mask]
        if np.any(np.abs(binary - np.round(binary)) > INTEGRALITY_TOL):
            return False
        return problem.base.max_violation(x) <= FEAS_TOL


def solve_milp(
    problem: MilpProblem,
    node_limit: Optional[int] = None,
    incumbent: Optional[np.ndarray] = None
) -> MilpSolution:
    """
    Solve a binary MILP by branch and bound.

    Args:
        problem: Problem to solve
        node_limit: Maximum number of node relaxations (defaults to settings)
        incumbent: Optional known feasible point used as the initial cutoff

    Returns:
        MilpSolution with binaries exactly 0/1
    """
    return BranchAndBound(node_limit=node_limit).solve(problem, incumbent=incumbent)
