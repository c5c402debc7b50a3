"""Immutable scenario entities in SI units."""
from enum import Enum
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class Position3D(_Frozen):
    """Point in meters."""

    x: float = Field(..., allow_inf_nan=False)
    y: float = Field(..., allow_inf_nan=False)
    z: float = Field(0.0, allow_inf_nan=False)

    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


class GroundUser(_Frozen):
    """Ground user generating one task part per slot."""

    id: int = Field(..., ge=0)
    position: Position3D
    cpu_cycles_per_bit: float = Field(..., gt=0, description="c_i, cycles/bit")
    local_cpu_rate: float = Field(..., gt=0, description="f^gcp, cycles/s")
    capacitance: float = Field(..., gt=0, description="effective switched capacitance")
    tx_power: float = Field(..., gt=0, description="W")
    energy_budget: float = Field(..., gt=0, description="J over the horizon")

    @field_validator("position")
    @classmethod
    def _on_ground(cls, value: Position3D) -> Position3D:
        if value.z != 0.0:
            raise ValueError("ground users must have z == 0")
        return value


class Uav(_Frozen):
    """Cruising edge server at fixed altitude."""

    id: int = Field(..., ge=0)
    start_position: Position3D
    end_position: Position3D
    cpu_rate: float = Field(..., gt=0, description="f^ucp, cycles/s")
    capacitance: float = Field(..., gt=0)
    tx_power: float = Field(..., gt=0, description="W")
    energy_budget: float = Field(..., gt=0, description="J over the horizon")
    cruise_speed: float = Field(..., gt=0, description="m/s")
    quota: int = Field(..., ge=0, description="max GUs computed per slot")

    @model_validator(mode="after")
    def _same_altitude(self) -> "Uav":
        if self.start_position.z != self.end_position.z:
            raise ValueError("start and end altitude must match")
        if self.start_position.z <= 0.0:
            raise ValueError("UAV altitude must be positive")
        return self

    @property
    def altitude(self) -> float:
        return self.start_position.z


class Hap(_Frozen):
    """Stationary high-altitude platform."""

    position: Position3D
    cpu_rate: float = Field(..., gt=0)
    capacitance: float = Field(..., gt=0)
    energy_budget: float = Field(..., gt=0)
    quota: int = Field(..., ge=0, description="max relayed GUs per slot")


class ChannelParams(_Frozen):
    """Air-to-ground and UAV-to-HAP link parameters."""

    los_a: float = Field(..., gt=0)
    los_b: float = Field(..., gt=0, description="per degree")
    beta0: float = Field(..., gt=0, description="gain at 1 m")
    pathloss_exp: float = Field(..., gt=0)
    nlos_atten: float = Field(..., gt=0, le=1)
    bandwidth_gu: float = Field(..., gt=0, description="Hz")
    noise_power: float = Field(..., gt=0, description="W")
    interference: float = Field(..., ge=0, description="W")
    bandwidth_uh: float = Field(..., gt=0, description="Hz")
    antenna_gain: float = Field(..., gt=0)
    total_loss: float = Field(..., gt=0)
    boltzmann: float = Field(1.380649e-23, gt=0)
    noise_temp: float = Field(..., gt=0, description="K")
    carrier_freq: float = Field(..., gt=0, description="Hz")
    light_speed: float = Field(3e8, gt=0)


class PropulsionModel(str, Enum):
    """Which rotary-wing power expression to evaluate."""

    PRINTED = "printed"
    STANDARD = "standard"


class PropulsionParams(_Frozen):
    """Rotary-wing power model constants."""

    blade_power: float = Field(..., gt=0, description="P1, W")
    induced_power: float = Field(..., gt=0, description="P2, W")
    tip_speed: float = Field(..., gt=0)
    drag_ratio: float = Field(..., gt=0)
    air_density: float = Field(..., gt=0)
    rotor_solidity: float = Field(..., gt=0)
    rotor_area: float = Field(..., gt=0)
    mean_rotor_velocity: float = Field(..., gt=0)
    model: PropulsionModel = PropulsionModel.PRINTED


class TimeGrid(_Frozen):
    num_slots: int = Field(..., ge=1)
    slot_len: float = Field(..., gt=0, description="s")


class Scenario(_Frozen):
    """Everything a solve needs besides the task-size uncertainty."""

    area_x: float = Field(..., gt=0)
    area_y: float = Field(..., gt=0)
    gus: Tuple[GroundUser, ...]
    uavs: Tuple[Uav, ...]
    hap: Hap
    channel: ChannelParams
    propulsion: PropulsionParams
    time: TimeGrid
    min_separation: float = Field(..., ge=0)

    @model_validator(mode="after")
    def _consistent(self) -> "Scenario":
        if not self.gus:
            raise ValueError("at least one ground user is required")
        if not self.uavs:
            raise ValueError("at least one UAV is required")
        altitudes = {uav.altitude for uav in self.uavs}
        if len(altitudes) != 1:
            raise ValueError("all UAVs fly at the same altitude")
        return self

    @property
    def num_gus(self) -> int:
        return len(self.gus)

    @property
    def num_uavs(self) -> int:
        return len(self.uavs)

    @property
    def num_slots(self) -> int:
        return self.time.num_slots

    @property
    def uav_altitude(self) -> float:
        return self.uavs[0].altitude

    def gu_xy(self) -> np.ndarray:
        """(I, 2) ground-user coordinates."""
        return np.array([[gu.position.x, gu.position.y] for gu in self.gus])

    def start_xy(self) -> np.ndarray:
        """(J, 2) UAV start coordinates."""
        return np.array([uav.start_position.xy() for uav in self.uavs])

    def end_xy(self) -> np.ndarray:
        """(J, 2) UAV end coordinates."""
        return np.array([uav.end_position.xy() for uav in self.uavs])
