"""Offloading decisions and UAV trajectories."""
from dataclasses import dataclass

import numpy as np

from src.utils.exceptions import ValidationError


@dataclass(frozen=True)
class OffloadDecision:
    """
    Binary tensors of shape (I, J, N).

    ``x[i, j, n]`` collects GU i's slot-n task on UAV j, which then either computes it
    (``y``) or relays it to the HAP (``z``). Slot axis index ``n`` is zero-based; it maps
    to waypoint ``n + 1`` of the trajectory.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        arrays = []
        for name in ("x", "y", "z"):
            arr = np.asarray(getattr(self, name))
            if arr.ndim != 3:
                raise ValidationError(f"Decision tensor {name} must be 3-dimensional")
            if not np.all((arr == 0) | (arr == 1)):
                raise ValidationError(f"Decision tensor {name} must be binary")
            arr = arr.astype(np.int8)
            arr.setflags(write=False)
            arrays.append(arr)
        if not (arrays[0].shape == arrays[1].shape == arrays[2].shape):
            raise ValidationError("Decision tensors must share a shape")
        for name, arr in zip(("x", "y", "z"), arrays):
            object.__setattr__(self, name, arr)

    @classmethod
    def zeros(cls, num_gus: int, num_uavs: int, num_slots: int) -> "OffloadDecision":
        shape = (num_gus, num_uavs, num_slots)
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape))

    @classmethod
    def from_yz(cls, y: np.ndarray, z: np.ndarray) -> "OffloadDecision":
        """Build a decision from compute/relay tensors (``x = y + z``)."""
        y = np.asarray(y)
        z = np.asarray(z)
        return cls(y + z, y, z)

    @property
    def shape(self):
        return self.x.shape

    def offloaded(self) -> np.ndarray:
        """(I, N) mask of task parts that leave the GU."""
        return self.x.sum(axis=1) > 0

    def is_all_local(self) -> bool:
        return not self.x.any()

    def equals(self, other: "OffloadDecision") -> bool:
        return (
            np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.z, other.z)
        )


@dataclass(frozen=True)
class TrajectoryPlan:
    """
    Horizontal UAV waypoints of shape (J, N + 1, 2).

    ``waypoints[j, 0]`` is the fixed start and ``waypoints[j, N]`` the fixed end; the UAV
    serves slot ``n`` (1..N) from ``waypoints[j, n]``.
    """

    waypoints: np.ndarray

    def __post_init__(self):
        wp = np.array(self.waypoints, dtype=float)
        if wp.ndim != 3 or wp.shape[2] != 2 or wp.shape[1] < 2:
            raise ValidationError("Waypoints must have shape (J, N + 1, 2) with N >= 1")
        if not np.all(np.isfinite(wp)):
            raise ValidationError("Waypoints must be finite")
        wp.setflags(write=False)
        object.__setattr__(self, "waypoints", wp)

    @classmethod
    def straight_line(cls, start: np.ndarray, end: np.ndarray, num_slots: int) -> "TrajectoryPlan":
        """Evenly spaced waypoints from ``start`` (J, 2) to ``end`` (J, 2)."""
        fractions = np.linspace(0.0, 1.0, num_slots + 1)[None, :, None]
        start = np.asarray(start, dtype=float)[:, None, :]
        end = np.asarray(end, dtype=float)[:, None, :]
        return cls(start + fractions * (end - start))

    @property
    def num_uavs(self) -> int:
        return self.waypoints.shape[0]

    @property
    def num_slots(self) -> int:
        return self.waypoints.shape[1] - 1

    def slot_positions(self) -> np.ndarray:
        """(J, N, 2) serving positions for slots 1..N."""
        return self.waypoints[:, 1:, :]

    def steps(self) -> np.ndarray:
        """(J, N) horizontal distance flown in each slot."""
        return np.linalg.norm(np.diff(self.waypoints, axis=1), axis=2)

    def with_free(self, free: np.ndarray) -> "TrajectoryPlan":
        """Replace the interior waypoints 1..N-1 with ``free`` of shape (J, N - 1, 2)."""
        wp = self.waypoints.copy()
        wp[:, 1:-1, :] = free
        return TrajectoryPlan(wp)
