"""Dense primal revised simplex with a two-phase start.

Problems are stated as ``optimize c'x + offset`` over rows ``a_i'x {<=,==,>=} b_i`` and
per-variable bounds ``l <= x <= u`` (infinite bounds allowed). The solver works on the
bounded-variable form: nonbasic variables sit at one of their bounds (or at zero when
free), so finite bounds never become extra rows.

Reported duals are sensitivities of the optimal objective to the right-hand sides in the
caller's sense, so for a minimization a ``<=`` row has a nonpositive dual and a ``>=`` row
a nonnegative one (signs flip for maximization).
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.config import settings
from src.utils.exceptions import SolverError, ValidationError

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
OPT_TOL = 1e-9
STALL_THRESHOLD = 50
REFACTOR_EVERY = 50

_AT_LOWER = 0
_AT_UPPER = 1
_FREE = 2
_BASIC = 3


class Sense(str, Enum):
    """Optimization direction."""

    MIN = "min"
    MAX = "max"


class Relation(str, Enum):
    """Row relation."""

    LE = "<="
    EQ = "=="
    GE = ">="


class LpStatus(str, Enum):
    """Terminal state of a solve."""

    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class LpProblem:
    """Immutable dense LP."""

    objective: np.ndarray
    matrix: np.ndarray
    relations: Tuple[Relation, ...]
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sense: Sense = Sense.MIN
    offset: float = 0.0
    row_labels: Tuple[str, ...] = ()
    var_labels: Tuple[str, ...] = ()

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).ravel()
        n = c.size
        a = np.asarray(self.matrix, dtype=float)
        if a.size == 0:
            a = a.reshape(0, n)
        if a.ndim != 2 or a.shape[1] != n:
            raise ValidationError(f"Constraint matrix shape {a.shape} does not match {n} variables")
        m = a.shape[0]
        relations = tuple(Relation(r) for r in self.relations)
        b = np.asarray(self.rhs, dtype=float).ravel()
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()

        if len(relations) != m or b.size != m:
            raise ValidationError(f"Expected {m} relations and right-hand sides")
        if lower.size != n or upper.size != n:
            raise ValidationError(f"Expected {n} lower and upper bounds")
        if np.any(lower > upper):
            bad = int(np.flatnonzero(lower > upper)[0])
            raise ValidationError(f"Variable {bad} has lower bound above upper bound")
        if np.any(lower == np.inf) or np.any(upper == -np.inf):
            raise ValidationError("Bounds must admit a finite value")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValidationError("Objective, matrix and right-hand side must be finite")
        if self.row_labels and len(self.row_labels) != m:
            raise ValidationError("Row label count does not match row count")
        if self.var_labels and len(self.var_labels) != n:
            raise ValidationError("Variable label count does not match variable count")

        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "relations", relations)
        object.__setattr__(self, "rhs", b)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "sense", Sense(self.sense))

    @property
    def num_vars(self) -> int:
        return self.objective.size

    @property
    def num_rows(self) -> int:
        return self.rhs.size

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "LpProblem":
        """Copy of the problem with replaced variable bounds."""
        return LpProblem(
            objective=self.objective,
            matrix=self.matrix,
            relations=self.relations,
            rhs=self.rhs,
            lower=lower,
            upper=upper,
            sense=self.sense,
            offset=self.offset,
            row_labels=self.row_labels,
            var_labels=self.var_labels,
        )

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def max_violation(self, x: np.ndarray) -> float:
        """Largest row or bound violation of ``x`` (0 when feasible)."""
        activity = self.row_activity(x)
        worst = 0.0
        for i, rel in enumerate(self.relations):
            gap = activity[i] - self.rhs[i]
            if rel is Relation.LE:
                worst = max(worst, gap)
            elif rel is Relation.GE:
                worst = max(worst, -gap)
            else:
                worst = max(worst, abs(gap))
        if x.size:
            worst = max(worst, float(np.max(self.lower - x, initial=0.0)))
            worst = max(worst, float(np.max(x - self.upper, initial=0.0)))
        return worst


@dataclass
class LpSolution:
    """Result of :func:`solve_lp`."""

    status: LpStatus
    primal: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    objective: float
    iterations: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class LpBuilder:
    """Incremental assembly of an :class:`LpProblem` from sparse rows."""

    def __init__(self):
        self._cost: List[float] = []
        self._lower: List[float] = []
        self._upper: List[float] = []
        self._var_labels: List[str] = []
        self._rows: List[Tuple[np.ndarray, np.ndarray]] = []
        self._relations: List[Relation] = []
        self._rhs: List[float] = []
        self._row_labels: List[str] = []

    @property
    def num_vars(self) -> int:
        return len(self._cost)

    @property
    def num_rows(self) -> int:
        return len(self._rhs)

    def add_variable(
        self,
        lower: float = 0.0,
        upper: float = np.inf,
        cost: float = 0.0,
        label: str = ""
    ) -> int:
        self._cost.append(float(cost))
        self._lower.append(float(lower))
        self._upper.append(float(upper))
        self._var_labels.append(label)
        return len(self._cost) - 1

    def add_variables(
        self,
        count: int,
        lower: Union[float, Sequence[float]] = 0.0,
        upper: Union[float, Sequence[float]] = np.inf,
        cost: Union[float, Sequence[float]] = 0.0,
        prefix: str = "v"
    ) -> np.ndarray:
        """Add ``count`` variables at once and return their indices."""
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (count,))
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (count,))
        cost = np.broadcast_to(np.asarray(cost, dtype=float), (count,))
        start = self.num_vars
        for k in range(count):
            self.add_variable(lower[k], upper[k], cost[k], f"{prefix}[{k}]")
        return np.arange(start, start + count)

    def set_cost(self, index: int, cost: float) -> None:
        self._cost[index] = float(cost)

    def add_row(
        self,
        indices: Iterable[int],
        values: Iterable[float],
        relation: Relation,
        rhs: float,
        label: str = ""
    ) -> int:
        idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices, dtype=int)
        val = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
        if idx.shape != val.shape:
            raise ValidationError(f"Row '{label}' has {idx.size} indices but {val.size} values")
        self._rows.append((idx.ravel(), val.ravel()))
        self._relations.append(Relation(relation))
        self._rhs.append(float(rhs))
        self._row_labels.append(label)
        return len(self._rhs) - 1

    def build(self, sense: Sense = Sense.MIN, offset: float = 0.0) -> LpProblem:
        n = self.num_vars
        matrix = np.zeros((self.num_rows, n))
        for i, (idx, val) in enumerate(self._rows):
            np.add.at(matrix[i], idx, val)
        return LpProblem(
            objective=np.array(self._cost),
            matrix=matrix,
            relations=tuple(self._relations),
            rhs=np.array(self._rhs),
            lower=np.array(self._lower),
            upper=np.array(self._upper),
            sense=sense,
            offset=offset,
            row_labels=tuple(self._row_labels),
            var_labels=tuple(self._var_labels),
        )


class RevisedSimplex:
    """Two-phase bounded-variable revised simplex on a dense explicit inverse.

    Entering variables follow Dantzig's rule until the objective stalls for
    ``stall_threshold`` pivots, then Bland's rule for the rest of the phase.
    """

    def __init__(
        self,
        max_iter: Optional[int] = None,
        pivot_tol: float = PIVOT_TOL,
        feas_tol: float = FEAS_TOL,
        stall_threshold: int = STALL_THRESHOLD
    ):
        self.max_iter = max_iter
        self.pivot_tol = pivot_tol
        self.feas_tol = feas_tol
        self.stall_threshold = stall_threshold

    def solve(self, problem: LpProblem) -> LpSolution:
        m, n = problem.num_rows, problem.num_vars
        c = problem.objective if problem.sense is Sense.MIN else -problem.objective
        max_iter = self.max_iter or settings.LP_MAX_ITERS or (50 * (m + n) + 1000)

        if m == 0:
            return self._solve_box(problem, c)

        # Columns: structurals, one slack per inequality row, artificials.
        slack_rows = [i for i, rel in enumerate(problem.relations) if rel is not Relation.EQ]
        num_slack = len(slack_rows)
        a = np.zeros((m, n + num_slack))
        a[:, :n] = problem.matrix
        slack_of_row = {}
        for k, i in enumerate(slack_rows):
            a[i, n + k] = 1.0 if problem.relations[i] is Relation.LE else -1.0
            slack_of_row[i] = n + k

        lower = np.concatenate([problem.lower, np.zeros(num_slack)])
        upper = np.concatenate([problem.upper, np.full(num_slack, np.inf)])
        cost = np.concatenate([c, np.zeros(num_slack)])
        b = problem.rhs.copy()

        finite_lower = np.isfinite(lower)
        finite_upper = np.isfinite(upper)
        x = np.where(finite_lower, lower, np.where(finite_upper, upper, 0.0))
        state = np.where(finite_lower, _AT_LOWER, np.where(finite_upper, _AT_UPPER, _FREE))

        residual = b - a @ x
        basis = np.empty(m, dtype=int)
        art_rows: List[int] = []
        art_signs: List[float] = []
        for i in range(m):
            s = slack_of_row.get(i)
            if s is not None and a[i, s] * residual[i] >= 0.0:
                basis[i] = s
                x[s] = residual[i] * a[i, s]
            else:
                art_rows.append(i)
                art_signs.append(1.0 if residual[i] >= 0.0 else -1.0)

        num_art = len(art_rows)
        first_art = a.shape[1]
        if num_art:
            art = np.zeros((m, num_art))
            art[art_rows, np.arange(num_art)] = art_signs
            a = np.hstack([a, art])
            lower = np.concatenate([lower, np.zeros(num_art)])
            upper = np.concatenate([upper, np.full(num_art, np.inf)])
            cost = np.concatenate([cost, np.zeros(num_art)])
            x = np.concatenate([x, np.abs(residual[art_rows])])
            state = np.concatenate([state, np.full(num_art, _AT_LOWER)])
            for k, i in enumerate(art_rows):
                basis[i] = first_art + k
        state[basis] = _BASIC

        iterations = 0
        if num_art:
            phase_one = np.zeros(a.shape[1])
            phase_one[first_art:] = 1.0
            status, iterations = self._iterate(a, b, phase_one, lower, upper, x, basis, state, 0, max_iter)
            if status is LpStatus.ITERATION_LIMIT:
                return self._failed(problem, status, iterations)
            if status is not LpStatus.OPTIMAL:
                raise SolverError(f"Phase one ended with status {status.value}")
            infeasibility = float(np.abs(x[first_art:]).sum())
            if infeasibility > self.feas_tol * max(1.0, float(np.abs(b).max())):
                logger.debug(f"[lp] infeasible: phase-one residual {infeasibility:.3e}")
                return self._failed(problem, LpStatus.INFEASIBLE, iterations)
            # Artificials are pinned at zero for phase two.
            upper[first_art:] = 0.0
            nonbasic_art = np.flatnonzero(state[first_art:] != _BASIC) + first_art
            x[nonbasic_art] = 0.0
            state[nonbasic_art] = _AT_LOWER

        status, iterations = self._iterate(a, b, cost, lower, upper, x, basis, state, iterations, max_iter)
        if status is not LpStatus.OPTIMAL:
            return self._failed(problem, status, iterations)

        binv = self._factor(a, basis)
        self._recompute_basic(a, b, x, basis, state, binv)
        y = cost[basis] @ binv
        duals = y if problem.sense is Sense.MIN else -y
        primal = x[:n].copy()
        return LpSolution(
            status=LpStatus.OPTIMAL,
            primal=primal,
            duals=duals,
            reduced_costs=problem.objective - problem.matrix.T @ duals,
            objective=float(problem.objective @ primal + problem.offset),
            iterations=iterations,
        )

    def _iterate(
        self,
        a: np.ndarray,
        b: np.ndarray,
        cost: np.ndarray,
        lower: np.ndarray,
        upper: np.ndarray,
        x: np.ndarray,
        basis: np.ndarray,
        state: np.ndarray,
        iterations: int,
        max_iter: int
    ) -> Tuple[LpStatus, int]:
        m = a.shape[0]
        binv = self._factor(a, basis)
        self._recompute_basic(a, b, x, basis, state, binv)
        movable = (upper - lower) > 0.0
        opt_tol = OPT_TOL * max(1.0, float(np.abs(cost).max()))
        bland = False
        best = float(cost @ x)
        stall = 0
        since_refactor = 0

        while True:
            if iterations >= max_iter:
                return LpStatus.ITERATION_LIMIT, iterations
            if since_refactor >= REFACTOR_EVERY:
                binv = self._factor(a, basis)
                self._recompute_basic(a, b, x, basis, state, binv)
                since_refactor = 0

            y = cost[basis] @ binv
            d = cost - y @ a
            can_rise = ((state == _AT_LOWER) | (state == _FREE)) & movable & (d < -opt_tol)
            can_fall = ((state == _AT_UPPER) | (state == _FREE)) & movable & (d > opt_tol)
            eligible = can_rise | can_fall
            if not eligible.any():
                return LpStatus.OPTIMAL, iterations

            if bland:
                q = int(np.flatnonzero(eligible)[0])
            else:
                q = int(np.argmax(np.where(eligible, np.abs(d), -1.0)))
            direction = 1.0 if can_rise[q] else -1.0

            w = binv @ a[:, q]
            delta = -direction * w
            xb = x[basis]
            ratios = np.full(m, np.inf)
            falling = delta < -self.pivot_tol
            rising = delta > self.pivot_tol
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios[falling] = (xb[falling] - lower[basis][falling]) / -delta[falling]
                ratios[rising] = (upper[basis][rising] - xb[rising]) / delta[rising]
            ratios = np.maximum(ratios, 0.0)
            step_limit = float(ratios.min())
            span = float(upper[q] - lower[q])

            if not np.isfinite(step_limit) and not np.isfinite(span):
                return LpStatus.UNBOUNDED, iterations

            if span <= step_limit:
                x[basis] += delta * span
                if direction > 0:
                    x[q] = upper[q]
                    state[q] = _AT_UPPER
                else:
                    x[q] = lower[q]
                    state[q] = _AT_LOWER
            else:
                ties = np.flatnonzero(ratios <= step_limit + 1e-12 * max(1.0, step_limit))
                if bland:
                    r = int(ties[np.argmin(basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(delta[ties]))])
                leaving = basis[r]
                x[basis] += delta * step_limit
                x[q] += direction * step_limit
                if delta[r] < 0.0:
                    x[leaving] = lower[leaving]
                    state[leaving] = _AT_LOWER
                else:
                    x[leaving] = upper[leaving]
                    state[leaving] = _AT_UPPER
                basis[r] = q
                state[q] = _BASIC

                pivot = w[r]
                row = binv[r] / pivot
                binv -= np.outer(w, row)
                binv[r] = row
                since_refactor += 1

            iterations += 1
            objective = float(cost @ x)
            if objective < best - 1e-12 * max(1.0, abs(best)):
                best = objective
                stall = 0
            else:
                stall += 1
                if stall >= self.stall_threshold and not bland:
                    logger.debug(f"[lp] objective stalled for {stall} pivots, switching to Bland's rule")
                    bland = True

    @staticmethod
    def _factor(a: np.ndarray, basis: np.ndarray) -> np.ndarray:
        try:
            return np.linalg.inv(a[:, basis])
        except np.linalg.LinAlgError as e:
            raise SolverError(f"Basis factorization failed: {str(e)}") from e

    @staticmethod
    def _recompute_basic(
        a: np.ndarray,
        b: np.ndarray,
        x: np.ndarray,
        basis: np.ndarray,
        state: np.ndarray,
        binv: np.ndarray
    ) -> None:
        nonbasic = state != _BASIC
        x[basis] = binv @ (b - a[:, nonbasic] @ x[nonbasic])

    def _solve_box(self, problem: LpProblem, c: np.ndarray) -> LpSolution:
        """Problems without rows decouple per variable."""
        x = np.zeros(problem.num_vars)
        for j, cj in enumerate(c):
            lo, hi = problem.lower[j], problem.upper[j]
            if cj > 0.0:
                if not np.isfinite(lo):
                    return self._failed(problem, LpStatus.UNBOUNDED, 0)
                x[j] = lo
            elif cj < 0.0:
                if not np.isfinite(hi):
                    return self._failed(problem, LpStatus.UNBOUNDED, 0)
                x[j] = hi
            else:
                x[j] = lo if np.isfinite(lo) else (hi if np.isfinite(hi) else 0.0)
        return LpSolution(
            status=LpStatus.OPTIMAL,
            primal=x,
            duals=np.zeros(0),
            reduced_costs=problem.objective.copy(),
            objective=float(problem.objective @ x + problem.offset),
        )

    @staticmethod
    def _failed(problem: LpProblem, status: LpStatus, iterations: int) -> LpSolution:
        if settings.LP_DUMP_DIR:
            dump_lp(problem, Path(settings.LP_DUMP_DIR) / f"lp_{status.value}_{id(problem):x}.txt")
        return LpSolution(
            status=status,
            primal=np.full(problem.num_vars, np.nan),
            duals=np.full(problem.num_rows, np.nan),
            reduced_costs=np.full(problem.num_vars, np.nan),
            objective=float("nan"),
            iterations=iterations,
        )


def solve_lp(problem: LpProblem, max_iter: Optional[int] = None) -> LpSolution:
    """
    Solve an LP with the two-phase revised simplex.

    Args:
        problem: Problem to solve
        max_iter: Optional pivot limit (defaults to a size-based limit)

    Returns:
        LpSolution; non-optimal outcomes are reported through ``status``
    """
    return RevisedSimplex(max_iter=max_iter).solve(problem)


def dump_lp(problem: LpProblem, path: Union[str, Path]) -> Path:
    """
    Write a plain-text tabular dump of an LP.

    Args:
        problem: Problem to dump
        path: Target file; parent directories are created

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = problem.var_labels or tuple(f"x{j}" for j in range(problem.num_vars))
    rows = problem.row_labels or tuple(f"r{i}" for i in range(problem.num_rows))
    width = max([len(s) for s in names] + [12])

    lines = [
        f"# {problem.sense.value} problem: {problem.num_vars} variables, {problem.num_rows} rows",
        f"# offset {problem.offset:.12g}",
        "",
        "VARIABLES",
        f"{'name':<{width}} {'cost':>14} {'lower':>14} {'upper':>14}",
    ]
    for j, name in enumerate(names):
        lines.append(
            f"{name:<{width}} {problem.objective[j]:>14.6g} "
            f"{problem.lower[j]:>14.6g} {problem.upper[j]:>14.6g}"
        )
    lines += ["", "ROWS"]
    for i, label in enumerate(rows):
        terms = " ".join(
            f"{problem.matrix[i, j]:+.6g}*{names[j]}"
            for j in np.flatnonzero(problem.matrix[i])
        )
        lines.append(f"{label}: {terms or '0'} {problem.relations[i].value} {problem.rhs[i]:.12g}")
    path.write_text("\n".join(lines) + "\n")
    return path
