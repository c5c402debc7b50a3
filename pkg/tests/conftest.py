"""Shared tiny scenarios."""
from typing import Optional, Sequence, Tuple

import pytest

from src.models.scenario import Position3D, Scenario
from src.models.schemas import GeneratorSettings
from src.models.uncertainty import AmbiguitySet
from src.services.experiment_service import build_space, generate_history, generate_scenario

TINY = {"I": 2, "J": 1, "N": 2}


def make_scenario(seed: int = 3, gu_xy: Optional[Sequence[Tuple[float, float]]] = None, **overrides) -> Scenario:
    """Generated scenario, optionally with the GUs moved to ``gu_xy``."""
    scenario = generate_scenario(seed, overrides)
    if gu_xy is not None:
        gus = tuple(
            gu.model_copy(update={"position": Position3D(x=x, y=y, z=0.0)})
            for gu, (x, y) in zip(scenario.gus, gu_xy)
        )
        scenario = scenario.model_copy(update={"gus": gus})
    return scenario


def make_ambiguity(scenario: Scenario, eps: float, seed: int = 3, num_samples: int = 200) -> AmbiguitySet:
    space = build_space(GeneratorSettings.from_defaults())
    history = generate_history(seed, scenario, space, num_samples)
    return AmbiguitySet(space=space, references=history.references(space), radius=eps)


@pytest.fixture
def tiny_scenario() -> Scenario:
    return make_scenario(3, **TINY)


@pytest.fixture
def tiny_amb(tiny_scenario) -> AmbiguitySet:
    return make_ambiguity(tiny_scenario, eps=0.3)
