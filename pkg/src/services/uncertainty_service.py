"""Reference distributions and the inner worst-case distribution problem."""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.models.uncertainty import AmbiguitySet, Distribution, SampleSpace, distributions_matrix
from src.solvers.lp import LpBuilder, LpStatus, Relation, Sense, solve_lp
from src.utils.exceptions import InfeasibleError, SolverError, ValidationError

logger = logging.getLogger(__name__)

SIDE_TOL = 1e-7


@dataclass(frozen=True)
class SideConstraint:
    """Linear expectation constraint ``sum_ik coeffs[i, k] * p[i, k] <= rhs``."""

    label: str
    coeffs: np.ndarray
    rhs: float

    def value(self, probs: np.ndarray) -> float:
        """Left-hand side minus right-hand side at (I, K) probabilities."""
        return float(np.sum(self.coeffs * probs) - self.rhs)


@dataclass(frozen=True)
class WorstCase:
    """Maximizing distributions of the inner problem."""

    dists: Tuple[Distribution, ...]
    objective: float
    iterations: int


def build_reference(samples: Sequence[float], space: SampleSpace) -> Distribution:
    """
    Empirical histogram of ``samples`` over the bins of ``space``.

    Args:
        samples: Q historical task sizes in bits
        space: Sample space with bin edges

    Returns:
        Distribution with ``probs[k]`` the share of samples in bin k

    Raises:
        ValidationError: If there are no samples or one falls outside the bins
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < 1:
        raise ValidationError("At least one historical sample is required")
    edges = space.bin_edges
    outside = (samples < edges[0]) | (samples >= edges[-1]) | ~np.isfinite(samples)
    if outside.any():
        raise ValidationError(f"Sample {samples[outside][0]:.6g} bits lies outside the sample space bins")
    bins = np.searchsorted(edges, samples, side="right") - 1
    counts = np.bincount(bins, minlength=space.size)
    return Distribution(counts / samples.size)


def l1_distance(p: Distribution, q: Distribution) -> float:
    """
    Sum of absolute weight differences.

    Raises:
        ValidationError: If the distributions have different supports
    """
    if p.size != q.size:
        raise ValidationError(f"Cannot compare distributions of size {p.size} and {q.size}")
    return float(np.abs(p.probs - q.probs).sum())


def expected_cost(costs: np.ndarray, dists: Sequence[Distribution]) -> float:
    return float(np.sum(np.asarray(costs) * distributions_matrix(dists)))


def worst_case_distribution(
    costs: np.ndarray,
    amb: AmbiguitySet,
    side: Optional[Sequence[SideConstraint]] = None
) -> WorstCase:
    """
    Maximize ``sum_ik p[i, k] * costs[i, k]`` over the ambiguity set.

    All GUs share one LP because side constraints (HAP energy in particular) couple them.
    The L1 ball is written with deviation variables ``u >= |p - p0|`` and ``sum_k u <= eps``.

    Args:
        costs: (I, K) aggregated delay of each GU under each sample value
        amb: Ambiguity set
        side: Expectation constraints that the distributions must keep

    Returns:
        WorstCase with one distribution per GU

    Raises:
        InfeasibleError: If the side constraints exclude the whole ambiguity set
        SolverError: If the LP stops for any other reason
    """
    costs = np.asarray(costs, dtype=float)
    num_gus, size = amb.num_gus, amb.space.size
    if costs.shape != (num_gus, size):
        raise ValidationError(f"Cost matrix shape {costs.shape}, expected {(num_gus, size)}")
    if not np.all(np.isfinite(costs)):
        raise ValidationError("Worst-case costs must be finite")
    side = list(side or [])
    ref = amb.reference_matrix()

    if amb.radius == 0.0:
        # Singleton ball: the references are the only candidates.
        for con in side:
            if con.value(ref) > SIDE_TOL * max(1.0, abs(con.rhs)):
                raise InfeasibleError(f"References violate side constraint '{con.label}'")
        return WorstCase(dists=amb.references, objective=expected_cost(costs, amb.references), iterations=0)

    builder = LpBuilder()
    p = builder.add_variables(num_gus * size, 0.0, 1.0, costs.ravel(), prefix="p").reshape(num_gus, size)
    u = builder.add_variables(num_gus * size, 0.0, 2.0, 0.0, prefix="u").reshape(num_gus, size)
    for i in range(num_gus):
        builder.add_row(p[i], np.ones(size), Relation.EQ, 1.0, label=f"simplex[{i}]")
        for k in range(size):
            builder.add_row([u[i, k], p[i, k]], [1.0, -1.0], Relation.GE, -ref[i, k], label=f"dev+[{i},{k}]")
            builder.add_row([u[i, k], p[i, k]], [1.0, 1.0], Relation.GE, ref[i, k], label=f"dev-[{i},{k}]")
        builder.add_row(u[i], np.ones(size), Relation.LE, amb.radius, label=f"ball[{i}]")
    for con in side:
        coeffs = np.asarray(con.coeffs, dtype=float)
        if coeffs.shape != (num_gus, size):
            raise ValidationError(f"Side constraint '{con.label}' has shape {coeffs.shape}")
        builder.add_row(p.ravel(), coeffs.ravel(), Relation.LE, con.rhs, label=con.label)

    solution = solve_lp(builder.build(sense=Sense.MAX))
    if solution.status is LpStatus.INFEASIBLE:
        raise InfeasibleError("Side constraints exclude the whole ambiguity set")
    if not solution.is_optimal:
        raise SolverError(f"Worst-case distribution LP ended with status {solution.status.value}")

    probs = solution.primal[p]
    dists = tuple(Distribution.normalized(row) for row in probs)
    objective = expected_cost(costs, dists)
    logger.debug(f"[worst-case] eps={amb.radius:.4g} objective={objective:.6g} lp_iters={solution.iterations}")
    return WorstCase(dists=dists, objective=objective, iterations=solution.iterations)
