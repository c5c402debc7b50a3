"""Service modules."""
from src.services.baseline_service import BaselineService, solve_baseline
from src.services.drcoto_service import drcoto_solve
from src.services.experiment_service import ExperimentService, run_sweep

__all__ = ["BaselineService", "solve_baseline", "drcoto_solve", "ExperimentService", "run_sweep"]
