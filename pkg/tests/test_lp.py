"""Revised simplex: statuses, duals, vertex-enumeration cross-checks and row scaling."""
import itertools

import numpy as np
import pytest

from src.solvers.lp import LpBuilder, LpProblem, LpStatus, Relation, Sense, dump_lp, solve_lp
from src.utils.exceptions import ValidationError


def _lp(c, a, relations, b, lower, upper, sense=Sense.MIN, offset=0.0):
    return LpProblem(
        objective=np.array(c, dtype=float),
        matrix=np.array(a, dtype=float),
        relations=tuple(relations),
        rhs=np.array(b, dtype=float),
        lower=np.array(lower, dtype=float),
        upper=np.array(upper, dtype=float),
        sense=sense,
        offset=offset,
    )


def test_separable_box_maximum():
    lp = _lp([1, 1], [[1, 0], [0, 1]], [Relation.LE, Relation.LE], [1, 1], [0, 0], [np.inf, np.inf], Sense.MAX)
    sol = solve_lp(lp)
    assert sol.status is LpStatus.OPTIMAL
    assert sol.objective == pytest.approx(2.0)
    assert sol.primal == pytest.approx([1.0, 1.0])


def test_unbounded_without_rows():
    lp = _lp([-1], np.zeros((0, 1)), [], [], [0], [np.inf])
    assert solve_lp(lp).status is LpStatus.UNBOUNDED


def test_unbounded_with_rows():
    lp = _lp([-1, -1], [[1, -1]], [Relation.LE], [1], [0, 0], [np.inf, np.inf])
    sol = solve_lp(lp)
    assert sol.status is LpStatus.UNBOUNDED
    assert not sol.is_optimal


def test_infeasible_rows():
    lp = _lp([1], [[1], [1]], [Relation.LE, Relation.GE], [1, 2], [0], [np.inf])
    assert solve_lp(lp).status is LpStatus.INFEASIBLE


def test_duals_of_maximization():
    # max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
    lp = _lp(
        [3, 5],
        [[1, 0], [0, 2], [3, 2]],
        [Relation.LE] * 3,
        [4, 12, 18],
        [0, 0],
        [np.inf, np.inf],
        Sense.MAX,
    )
    sol = solve_lp(lp)
    assert sol.objective == pytest.approx(36.0)
    assert sol.primal == pytest.approx([2.0, 6.0])
    assert sol.duals == pytest.approx([0.0, 1.5, 1.0], abs=1e-9)
    assert sol.reduced_costs == pytest.approx([0.0, 0.0], abs=1e-9)


def test_duals_of_minimization_with_ge_rows():
    lp = _lp([1, 1], [[1, 2], [3, 1]], [Relation.GE, Relation.GE], [4, 6], [0, 0], [np.inf, np.inf])
    sol = solve_lp(lp)
    assert sol.objective == pytest.approx(2.8)
    assert sol.primal == pytest.approx([1.6, 1.2])
    assert sol.duals == pytest.approx([0.4, 0.2])


def test_equality_bounds_and_offset():
    lp = _lp([1, 0], [[1, 1]], [Relation.EQ], [3], [0, 0], [np.inf, 1], offset=10.0)
    sol = solve_lp(lp)
    assert sol.primal == pytest.approx([2.0, 1.0])
    assert sol.objective == pytest.approx(12.0)
    assert lp.max_violation(sol.primal) <= 1e-9


def test_free_variable():
    lp = _lp([1], [[1]], [Relation.GE], [-5], [-np.inf], [np.inf])
    sol = solve_lp(lp)
    assert sol.objective == pytest.approx(-5.0)


def _vertex_oracle(c, a, b, upper):
    """Best objective over all basic solutions of a <= rows plus 0 <= x <= upper."""
    n = len(c)
    rows = np.vstack([a, -np.eye(n), np.eye(n)])
    rhs = np.concatenate([b, np.zeros(n), np.full(n, upper)])
    best = np.inf
    for active in itertools.combinations(range(rows.shape[0]), n):
        sub = rows[list(active)]
        if abs(np.linalg.det(sub)) < 1e-9:
            continue
        x = np.linalg.solve(sub, rhs[list(active)])
        if np.all(rows @ x <= rhs + 1e-9):
            best = min(best, float(c @ x))
    return best


@pytest.mark.parametrize("seed", range(100))
def test_random_lps_match_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    m = int(rng.integers(1, 6))
    c = rng.normal(size=n)
    a = rng.uniform(-1.0, 2.0, size=(m, n))
    b = rng.uniform(1.0, 5.0, size=m)
    lp = _lp(c, a, [Relation.LE] * m, b, np.zeros(n), np.full(n, 10.0))
    sol = solve_lp(lp)
    assert sol.status is LpStatus.OPTIMAL
    expected = _vertex_oracle(c, a, b, 10.0)
    assert sol.objective == pytest.approx(expected, abs=1e-6 * max(1.0, abs(expected)))


def test_builder_assembles_rows():
    builder = LpBuilder()
    x = builder.add_variable(0.0, 4.0, 1.0, label="x")
    ys = builder.add_variables(2, 0.0, 1.0, -1.0, prefix="y")
    builder.add_row([x, ys[0], ys[0]], [1.0, 0.5, 0.5], Relation.GE, 1.0, label="mix")
    lp = builder.build()
    assert lp.num_vars == 3
    assert lp.matrix[0] == pytest.approx([1.0, 1.0, 0.0])
    assert lp.var_labels == ("x", "y[0]", "y[1]")
    sol = solve_lp(lp)
    assert sol.objective == pytest.approx(-2.0)


def test_builder_rejects_mismatched_row():
    builder = LpBuilder()
    builder.add_variables(2)
    with pytest.raises(ValidationError):
        builder.add_row([0, 1], [1.0], Relation.LE, 1.0, label="bad")


def test_problem_rejects_crossed_bounds():
    with pytest.raises(ValidationError):
        _lp([1], np.zeros((0, 1)), [], [], [2], [1])


def test_dump_lp(tmp_path):
    builder = LpBuilder()
    x = builder.add_variable(0.0, 1.0, 2.0, label="x")
    builder.add_row([x], [1.0], Relation.LE, 0.5, label="cap")
    path = dump_lp(builder.build(), tmp_path / "dump" / "lp.txt")
    text = path.read_text()
    assert "VARIABLES" in text
    assert "cap: +1*x <= 0.5" in text


def _feasible_mixed_lp(seed, sense=Sense.MIN):
    """Random LP with <=, >= and = rows and finite bounds, feasible by construction."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    m = int(rng.integers(1, 6))
    lower = rng.uniform(-5.0, 0.0, size=n)
    upper = rng.uniform(1.0, 5.0, size=n)
    x0 = rng.uniform(lower, upper)
    a = rng.uniform(-2.0, 2.0, size=(m, n))
    num_eq = int(rng.integers(0, min(2, n - 1) + 1))
    relations = [Relation.EQ] * min(num_eq, m)
    relations += [(Relation.LE, Relation.GE)[k] for k in rng.integers(0, 2, size=m - len(relations))]
    gap = rng.uniform(0.0, 2.0, size=m)
    side = {Relation.LE: 1.0, Relation.GE: -1.0, Relation.EQ: 0.0}
    b = a @ x0 + gap * np.array([side[r] for r in relations])
    c = rng.normal(size=n)
    return _lp(c, a, relations, b, lower, upper, sense)


def _mixed_vertex_oracle(lp):
    n = lp.num_vars
    eq = [i for i, r in enumerate(lp.relations) if r is Relation.EQ]
    flip = np.array([1.0 if r is Relation.LE else -1.0 for r in lp.relations])
    ineq = [i for i, r in enumerate(lp.relations) if r is not Relation.EQ]
    ineq_rows = [flip[i] * lp.matrix[i] for i in ineq]
    ineq_rhs = [flip[i] * lp.rhs[i] for i in ineq]
    g = np.vstack(ineq_rows + [-np.eye(n), np.eye(n)])
    h = np.concatenate([np.array(ineq_rhs, dtype=float), -lp.lower, lp.upper])
    e, f = lp.matrix[eq], lp.rhs[eq]
    sign = 1.0 if lp.sense is Sense.MIN else -1.0
    best = np.inf
    for active in itertools.combinations(range(g.shape[0]), n - len(eq)):
        sub = np.vstack([e, g[list(active)]])
        if abs(np.linalg.det(sub)) < 1e-9:
            continue
        x = np.linalg.solve(sub, np.concatenate([f, h[list(active)]]))
        if np.all(g @ x <= h + 1e-7) and np.allclose(e @ x, f, atol=1e-7):
            best = min(best, sign * float(lp.objective @ x))
    return sign * best


@pytest.mark.parametrize("seed", range(60))
def test_mixed_rows_match_vertex_enumeration(seed):
    lp = _feasible_mixed_lp(seed, Sense.MIN if seed % 2 else Sense.MAX)
    sol = solve_lp(lp)
    assert sol.status is LpStatus.OPTIMAL
    assert lp.max_violation(sol.primal) <= 1e-7
    expected = _mixed_vertex_oracle(lp)
    assert sol.objective == pytest.approx(expected, abs=1e-6 * max(1.0, abs(expected)))


@pytest.mark.parametrize("seed", range(40))
def test_strong_duality_and_complementary_slackness(seed):
    lp = _feasible_mixed_lp(1000 + seed)
    sol = solve_lp(lp)
    assert sol.status is LpStatus.OPTIMAL
    x, y, d = sol.primal, sol.duals, sol.reduced_costs
    scale = max(1.0, abs(sol.objective))

    # Objective equals the dual objective over rows and active bounds.
    assert sol.objective == pytest.approx(float(y @ lp.rhs + d @ x), abs=1e-7 * scale)

    slack = lp.row_activity(x) - lp.rhs
    for yi, si, rel in zip(y, slack, lp.relations):
        if rel is Relation.LE:
            assert yi <= 1e-7
        elif rel is Relation.GE:
            assert yi >= -1e-7
        assert abs(yi * si) <= 1e-7 * scale
    at_lower = np.isclose(x, lp.lower, atol=1e-9)
    at_upper = np.isclose(x, lp.upper, atol=1e-9)
    assert np.all(d[~at_lower & ~at_upper] == pytest.approx(0.0, abs=1e-7))
    assert np.all(d[at_lower & ~at_upper] >= -1e-7)
    assert np.all(d[at_upper & ~at_lower] <= 1e-7)


@pytest.mark.parametrize("seed", range(30))
def test_row_scaling_leaves_the_optimum_unchanged(seed):
    lp = _feasible_mixed_lp(2000 + seed)
    rng = np.random.default_rng(seed)
    factors = rng.uniform(0.01, 100.0, size=lp.num_rows) * rng.choice([-1.0, 1.0], size=lp.num_rows)
    flipped = {Relation.LE: Relation.GE, Relation.GE: Relation.LE, Relation.EQ: Relation.EQ}
    relations = [rel if k > 0 else flipped[rel] for rel, k in zip(lp.relations, factors)]
    scaled = _lp(
        lp.objective, lp.matrix * factors[:, None], relations, lp.rhs * factors, lp.lower, lp.upper, lp.sense
    )

    base, other = solve_lp(lp), solve_lp(scaled)
    assert other.status is LpStatus.OPTIMAL
    assert other.objective == pytest.approx(base.objective, abs=1e-6 * max(1.0, abs(base.objective)))
    assert lp.max_violation(other.primal) <= 1e-6
