"""Task-size sample space, distributions and the L1 ambiguity set."""
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from src.utils.exceptions import ValidationError

PROB_TOL = 1e-9


class SizeMode(str, Enum):
    """How a sample value maps to the per-slot task size."""

    PER_SLOT = "per_slot"
    TOTAL = "total"


@dataclass(frozen=True)
class SampleSpace:
    """Ordered sample values (bits) with their histogram bin edges."""

    values: np.ndarray
    bin_edges: np.ndarray
    size_mode: SizeMode = SizeMode.PER_SLOT

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        edges = np.asarray(self.bin_edges, dtype=float).ravel()
        if values.size < 1:
            raise ValidationError("Sample space needs at least one value")
        if edges.size != values.size + 1:
            raise ValidationError("Sample space needs K + 1 bin edges")
        if np.any(np.diff(values) <= 0):
            raise ValidationError("Sample values must be strictly increasing")
        if np.any(np.diff(edges) <= 0):
            raise ValidationError("Bin edges must be strictly increasing")
        if np.any(values < edges[:-1]) or np.any(values >= edges[1:]):
            raise ValidationError("Each sample value must fall inside its own bin")
        if values[0] <= 0:
            raise ValidationError("Sample values must be positive")
        values.setflags(write=False)
        edges.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "size_mode", SizeMode(self.size_mode))

    @classmethod
    def from_values(cls, values: Sequence[float], size_mode: SizeMode = SizeMode.PER_SLOT) -> "SampleSpace":
        """Midpoint edges between consecutive values; outer edges at 0 and +inf."""
        values = np.asarray(values, dtype=float)
        mids = (values[:-1] + values[1:]) / 2.0
        edges = np.concatenate([[0.0], mids, [np.inf]])
        return cls(values=values, bin_edges=edges, size_mode=size_mode)

    @property
    def size(self) -> int:
        return self.values.size

    def slot_values(self, num_slots: int) -> np.ndarray:
        """Per-slot task size of each sample (bits)."""
        if self.size_mode is SizeMode.TOTAL:
            return self.values / num_slots
        return self.values


@dataclass(frozen=True)
class Distribution:
    """Probability weights over the sample space."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float).ravel()
        if probs.size < 1:
            raise ValidationError("Distribution needs at least one weight")
        if np.any(probs < -PROB_TOL) or np.any(probs > 1 + PROB_TOL):
            raise ValidationError("Probabilities must lie in [0, 1]")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValidationError(f"Probabilities sum to {probs.sum():.12g}, not 1")
        probs = np.clip(probs, 0.0, 1.0)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def point_mass(cls, size: int, index: int) -> "Distribution":
        probs = np.zeros(size)
        probs[index] = 1.0
        return cls(probs)

    @classmethod
    def normalized(cls, weights: np.ndarray) -> "Distribution":
        """Zero LP round-off (negatives and weights below 1e-12) and renormalize."""
        weights = np.asarray(weights, dtype=float).copy()
        weights[weights < 1e-12] = 0.0
        return cls(weights / weights.sum())

    @property
    def size(self) -> int:
        return self.probs.size

    def mean(self, values: np.ndarray) -> float:
        return float(self.probs @ values)


@dataclass(frozen=True)
class AmbiguitySet:
    """L1 balls of radius ``radius`` around each GU's reference distribution."""

    space: SampleSpace
    references: Tuple[Distribution, ...]
    radius: float

    def __post_init__(self):
        if not np.isfinite(self.radius) or self.radius < 0:
            raise ValidationError("Ambiguity radius must be a finite nonnegative number")
        refs = tuple(self.references)
        if not refs:
            raise ValidationError("At least one reference distribution is required")
        for i, ref in enumerate(refs):
            if ref.size != self.space.size:
                raise ValidationError(f"Reference {i} has {ref.size} weights, expected {self.space.size}")
        object.__setattr__(self, "references", refs)

    @property
    def num_gus(self) -> int:
        return len(self.references)

    def reference_matrix(self) -> np.ndarray:
        """(I, K) reference probabilities."""
        return np.vstack([ref.probs for ref in self.references])

    def with_radius(self, radius: float) -> "AmbiguitySet":
        return AmbiguitySet(space=self.space, references=self.references, radius=radius)


def distributions_matrix(dists: Sequence[Distribution]) -> np.ndarray:
    """Stack distributions into an (I, K) array."""
    return np.vstack([d.probs for d in dists])


def mean_sizes(dists: Sequence[Distribution], space: SampleSpace, num_slots: int) -> np.ndarray:
    """(I,) expected per-slot task size in bits under ``dists``."""
    return distributions_matrix(dists) @ space.slot_values(num_slots)


def same_distributions(
    first: Sequence[Distribution],
    second: Optional[Sequence[Distribution]],
    tol: float = 1e-12
) -> bool:
    if second is None or len(first) != len(second):
        return False
    return bool(np.max(np.abs(distributions_matrix(first) - distributions_matrix(second))) <= tol)
