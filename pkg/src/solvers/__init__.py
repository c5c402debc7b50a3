"""LP and MILP engines."""
from src.solvers.lp import LpBuilder, LpProblem, LpSolution, LpStatus, Relation, Sense, solve_lp
from src.solvers.milp import MilpProblem, MilpSolution, MilpStatus, solve_milp

__all__ = [
    "LpBuilder",
    "LpProblem",
    "LpSolution",
    "LpStatus",
    "Relation",
    "Sense",
    "solve_lp",
    "MilpProblem",
    "MilpSolution",
    "MilpStatus",
    "solve_milp",
]
