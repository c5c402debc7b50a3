"""Application configuration."""
import os
from pathlib import Path
from dotenv import load_dotenv

from src.utils.exceptions import ConfigurationError

# Load environment variables
load_dotenv()


def _flag(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() == "true"


class Settings:
    """Application settings."""

    # Application
    DEBUG: bool = _flag("DEBUG", "false")
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO").upper()

    # Outputs
    OUTPUT_DIR: str = os.getenv("OUTPUT_DIR", "results")
    LP_DUMP_DIR: str = os.getenv("LP_DUMP_DIR", "")

    # Solver tolerances (seconds for the three gaps)
    SCA_TOL: float = float(os.getenv("SCA_TOL", "1e-3"))
    BENDERS_TOL: float = float(os.getenv("BENDERS_TOL", "1e-2"))
    OUTER_TOL: float = float(os.getenv("OUTER_TOL", "1e-3"))

    # Iteration caps
    MAX_SCA_ITERS: int = int(os.getenv("MAX_SCA_ITERS", "30"))
    MAX_BENDERS_ITERS: int = int(os.getenv("MAX_BENDERS_ITERS", "40"))
    MAX_OUTER_ITERS: int = int(os.getenv("MAX_OUTER_ITERS", "20"))
    MILP_NODE_LIMIT: int = int(os.getenv("MILP_NODE_LIMIT", "5000"))
    LP_MAX_ITERS: int = int(os.getenv("LP_MAX_ITERS", "0"))  # 0 = size based

    # Subproblem penalty on expectation-constraint slack (s per unit)
    PENALTY_WEIGHT: float = float(os.getenv("PENALTY_WEIGHT", "1e4"))

    WARM_START: bool = _flag("WARM_START", "true")

    # Project paths
    BASE_DIR: Path = Path(__file__).resolve().parent.parent
    DATA_DIR: Path = Path(__file__).resolve().parent / "data"
    DEFAULTS_FILE: Path = DATA_DIR / "defaults.json"

    def validate(self) -> None:
        """Validate settings."""
        if self.LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigurationError(f"Unknown LOG_LEVEL: {self.LOG_LEVEL}")

        for name in ("SCA_TOL", "BENDERS_TOL", "OUTER_TOL", "PENALTY_WEIGHT"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")

        for name in ("MAX_SCA_ITERS", "MAX_BENDERS_ITERS", "MAX_OUTER_ITERS", "MILP_NODE_LIMIT"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be at least 1")

        if not self.DEFAULTS_FILE.exists():
            raise ConfigurationError(f"Defaults file missing: {self.DEFAULTS_FILE}")


settings = Settings()
