"""Domain models."""
from src.models.plans import OffloadDecision, TrajectoryPlan
from src.models.scenario import Scenario
from src.models.uncertainty import AmbiguitySet, Distribution, SampleSpace

__all__ = ["OffloadDecision", "TrajectoryPlan", "Scenario", "AmbiguitySet", "Distribution", "SampleSpace"]
