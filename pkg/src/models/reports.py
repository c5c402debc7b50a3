"""Solver settings, cuts and result records."""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.config import settings
from src.models.plans import OffloadDecision, TrajectoryPlan
from src.models.uncertainty import Distribution


class Tolerances(BaseModel):
    """Stopping rules and knobs for the nested DRCOTO loops."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    sca_tol: float = Field(default_factory=lambda: settings.SCA_TOL, gt=0, description="s")
    benders_tol: float = Field(default_factory=lambda: settings.BENDERS_TOL, gt=0, description="s")
    outer_tol: float = Field(default_factory=lambda: settings.OUTER_TOL, gt=0, description="s")
    max_sca_iters: int = Field(default_factory=lambda: settings.MAX_SCA_ITERS, ge=1)
    max_benders_iters: int = Field(default_factory=lambda: settings.MAX_BENDERS_ITERS, ge=1)
    max_outer_iters: int = Field(default_factory=lambda: settings.MAX_OUTER_ITERS, ge=1)
    penalty: float = Field(default_factory=lambda: settings.PENALTY_WEIGHT, gt=0, description="s per unit slack")
    min_trust_radius: float = Field(1e-4, gt=0, description="m")
    polygon_sides: int = Field(16, ge=8)
    node_limit: int = Field(default_factory=lambda: settings.MILP_NODE_LIMIT, ge=1)
    warm_start: bool = Field(default_factory=lambda: settings.WARM_START)
    gradient_check: bool = False


@dataclass(frozen=True)
class SlotCost:
    """Delay and energies of one GU task part in one slot."""

    delay: float
    gu_energy: float
    uav_compute_energy: float
    uav_relay_energy: float
    hap_energy: float


class BaselineMode(str, Enum):
    """Fixed-distribution comparison methods."""

    DO = "do"
    SO = "so"
    RO = "ro"


@dataclass(frozen=True)
class BendersCut:
    """
    Optimality cut ``xi >= constant + <coeff_x, x> + <coeff_y, y> + <coeff_z, z>``.

    The cut is the Lagrangian of the trajectory subproblem at ``reference``, extended
    per indicator: switching an indicator on is charged at the best link rate any
    trajectory can reach, switching it off is credited at the worst. It is exact at
    ``reference`` and below the subproblem Lagrangian everywhere else. The uplink part of
    each slope depends on whether the part is computed on the UAV or relayed, so it is
    folded into ``coeff_y`` and ``coeff_z`` and ``coeff_x`` stays zero.
    """

    constant: float
    coeff_x: np.ndarray
    coeff_y: np.ndarray
    coeff_z: np.ndarray
    reference: OffloadDecision

    @classmethod
    def at_reference(
        cls,
        value: float,
        slope_y: np.ndarray,
        slope_z: np.ndarray,
        reference: OffloadDecision
    ) -> "BendersCut":
        """Cut through ``value`` at ``reference`` with the given per-indicator slopes."""
        shift = float(np.sum(slope_y * reference.y) + np.sum(slope_z * reference.z))
        return cls(
            constant=value - shift,
            coeff_x=np.zeros_like(slope_y),
            coeff_y=slope_y,
            coeff_z=slope_z,
            reference=reference,
        )

    def evaluate(self, dec: OffloadDecision) -> float:
        return float(
            self.constant
            + np.sum(self.coeff_x * dec.x)
            + np.sum(self.coeff_y * dec.y)
            + np.sum(self.coeff_z * dec.z)
        )

    def master_terms(self) -> Tuple[float, np.ndarray, np.ndarray]:
        """
        Constant and (y, z) coefficients after substituting ``x = y + z``.

        Returns:
            (constant, coeff_y, coeff_z) with coefficient tensors shaped (I, J, N)
        """
        return self.constant, self.coeff_x + self.coeff_y, self.coeff_x + self.coeff_z


@dataclass(frozen=True)
class BendersLogRow:
    """One Benders iteration."""

    outer: int
    iteration: int
    upper_bound: float
    lower_bound: float
    cuts: int
    sca_iters: int


@dataclass
class SolveReport:
    """Outcome of one DRCOTO or baseline solve."""

    method: str
    objective: float
    decisions: OffloadDecision
    trajectories: TrajectoryPlan
    worst_dists: Tuple[Distribution, ...]
    ub_trace: List[float]
    lb_trace: List[float]
    outer_iters: int
    benders_iters: int
    sca_iters: int
    wall_time: float
    converged: bool = True
    bound_log: List[BendersLogRow] = field(default_factory=list)
    trust_region_collapses: int = 0
    side_relaxed: bool = False
    outer_monotone: bool = True
    notes: Optional[str] = None
