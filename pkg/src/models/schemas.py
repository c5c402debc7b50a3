"""Pydantic schemas for scenario, generator and experiment files.

File-level models use unit-suffixed keys (``_m``, ``_dbm``, ``_mbit`` ...). Conversion to
the SI domain models happens once, in the ``to_*`` methods.
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic import ValidationError as PydanticValidationError

from src.config import settings
from src.models.reports import Tolerances
from src.models.scenario import (
    ChannelParams,
    GroundUser,
    Hap,
    Position3D,
    PropulsionModel,
    PropulsionParams,
    Scenario,
    TimeGrid,
    Uav,
)
from src.models.uncertainty import SampleSpace, SizeMode
from src.utils.exceptions import ValidationError
from src.utils.units import bits_to_mbit, dbm_to_watts, mbit_to_bits, watts_to_dbm


class _FileModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class GroundUserEntry(_FileModel):
    """One GU in a scenario file."""

    id: int = Field(..., ge=0)
    x_m: float
    y_m: float
    cpu_cycles_per_bit: float = Field(..., gt=0)
    local_cpu_hz: float = Field(..., gt=0)
    capacitance: float = Field(..., gt=0)
    tx_power_dbm: float
    energy_budget_j: float = Field(..., gt=0)


class UavEntry(_FileModel):
    """One UAV in a scenario file."""

    id: int = Field(..., ge=0)
    start_x_m: float
    start_y_m: float
    end_x_m: float
    end_y_m: float
    altitude_m: float = Field(..., gt=0)
    cpu_hz: float = Field(..., gt=0)
    capacitance: float = Field(..., gt=0)
    tx_power_dbm: float
    energy_budget_j: float = Field(..., gt=0)
    cruise_speed_mps: float = Field(..., gt=0)
    quota: int = Field(..., ge=0)


class HapEntry(_FileModel):
    x_m: float
    y_m: float
    altitude_m: float = Field(..., gt=0)
    cpu_hz: float = Field(..., gt=0)
    capacitance: float = Field(..., gt=0)
    energy_budget_j: float = Field(..., gt=0)
    quota: int = Field(..., ge=0)


class ChannelEntry(_FileModel):
    los_a: float
    los_b_per_deg: float
    beta0: float
    pathloss_exp: float
    nlos_atten: float
    bandwidth_gu_hz: float
    noise_power_dbm: float
    interference_dbm: float
    bandwidth_uh_hz: float
    antenna_gain: float
    total_loss: float
    noise_temp_k: float
    carrier_freq_hz: float


class PropulsionEntry(_FileModel):
    blade_power_w: float
    induced_power_w: float
    tip_speed_mps: float
    drag_ratio: float
    air_density_kg_m3: float
    rotor_solidity: float
    rotor_area_m2: float
    mean_rotor_velocity_mps: float
    model: PropulsionModel = PropulsionModel.PRINTED


class UncertaintyEntry(_FileModel):
    task_samples_mbit: List[float] = Field(..., min_length=1)
    bin_edges_mbit: Optional[List[float]] = None
    eps: float = Field(..., ge=0)
    size_mode: SizeMode = SizeMode.PER_SLOT


class ScenarioFile(_FileModel):
    """JSON scenario document."""

    area_x_m: float = Field(..., gt=0)
    area_y_m: float = Field(..., gt=0)
    min_separation_m: float = Field(..., ge=0)
    num_slots: int = Field(..., ge=1)
    slot_len_s: float = Field(..., gt=0)
    gus: List[GroundUserEntry] = Field(..., min_length=1)
    uavs: List[UavEntry] = Field(..., min_length=1)
    hap: HapEntry
    channel: ChannelEntry
    propulsion: PropulsionEntry
    uncertainty: UncertaintyEntry

    def to_scenario(self) -> Scenario:
        ch = self.channel
        pr = self.propulsion
        return Scenario(
            area_x=self.area_x_m,
            area_y=self.area_y_m,
            min_separation=self.min_separation_m,
            time=TimeGrid(num_slots=self.num_slots, slot_len=self.slot_len_s),
            gus=tuple(
                GroundUser(
                    id=g.id,
                    position=Position3D(x=g.x_m, y=g.y_m, z=0.0),
                    cpu_cycles_per_bit=g.cpu_cycles_per_bit,
                    local_cpu_rate=g.local_cpu_hz,
                    capacitance=g.capacitance,
                    tx_power=dbm_to_watts(g.tx_power_dbm),
                    energy_budget=g.energy_budget_j,
                )
                for g in self.gus
            ),
            uavs=tuple(
                Uav(
                    id=u.id,
                    start_position=Position3D(x=u.start_x_m, y=u.start_y_m, z=u.altitude_m),
                    end_position=Position3D(x=u.end_x_m, y=u.end_y_m, z=u.altitude_m),
                    cpu_rate=u.cpu_hz,
                    capacitance=u.capacitance,
                    tx_power=dbm_to_watts(u.tx_power_dbm),
                    energy_budget=u.energy_budget_j,
                    cruise_speed=u.cruise_speed_mps,
                    quota=u.quota,
                )
                for u in self.uavs
            ),
            hap=Hap(
                position=Position3D(x=self.hap.x_m, y=self.hap.y_m, z=self.hap.altitude_m),
                cpu_rate=self.hap.cpu_hz,
                capacitance=self.hap.capacitance,
                energy_budget=self.hap.energy_budget_j,
                quota=self.hap.quota,
            ),
            channel=ChannelParams(
                los_a=ch.los_a,
                los_b=ch.los_b_per_deg,
                beta0=ch.beta0,
                pathloss_exp=ch.pathloss_exp,
                nlos_atten=ch.nlos_atten,
                bandwidth_gu=ch.bandwidth_gu_hz,
                noise_power=dbm_to_watts(ch.noise_power_dbm),
                interference=dbm_to_watts(ch.interference_dbm),
                bandwidth_uh=ch.bandwidth_uh_hz,
                antenna_gain=ch.antenna_gain,
                total_loss=ch.total_loss,
                noise_temp=ch.noise_temp_k,
                carrier_freq=ch.carrier_freq_hz,
            ),
            propulsion=PropulsionParams(
                blade_power=pr.blade_power_w,
                induced_power=pr.induced_power_w,
                tip_speed=pr.tip_speed_mps,
                drag_ratio=pr.drag_ratio,
                air_density=pr.air_density_kg_m3,
                rotor_solidity=pr.rotor_solidity,
                rotor_area=pr.rotor_area_m2,
                mean_rotor_velocity=pr.mean_rotor_velocity_mps,
                model=pr.model,
            ),
        )

    def to_space(self) -> SampleSpace:
        unc = self.uncertainty
        values = [mbit_to_bits(v) for v in unc.task_samples_mbit]
        if unc.bin_edges_mbit is None:
            return SampleSpace.from_values(values, size_mode=unc.size_mode)
        edges = [mbit_to_bits(v) for v in unc.bin_edges_mbit]
        return SampleSpace(values=values, bin_edges=edges, size_mode=unc.size_mode)

    @classmethod
    def from_domain(cls, scenario: Scenario, space: SampleSpace, eps: float) -> "ScenarioFile":
        ch = scenario.channel
        pr = scenario.propulsion
        edges = [float(bits_to_mbit(e)) for e in space.bin_edges]
        default_edges = SampleSpace.from_values(space.values).bin_edges
        keep_edges = not (len(default_edges) == len(space.bin_edges) and (default_edges == space.bin_edges).all())
        return cls(
            area_x_m=scenario.area_x,
            area_y_m=scenario.area_y,
            min_separation_m=scenario.min_separation,
            num_slots=scenario.time.num_slots,
            slot_len_s=scenario.time.slot_len,
            gus=[
                GroundUserEntry(
                    id=g.id,
                    x_m=g.position.x,
                    y_m=g.position.y,
                    cpu_cycles_per_bit=g.cpu_cycles_per_bit,
                    local_cpu_hz=g.local_cpu_rate,
                    capacitance=g.capacitance,
                    tx_power_dbm=watts_to_dbm(g.tx_power),
                    energy_budget_j=g.energy_budget,
                )
                for g in scenario.gus
            ],
            uavs=[
                UavEntry(
                    id=u.id,
                    start_x_m=u.start_position.x,
                    start_y_m=u.start_position.y,
                    end_x_m=u.end_position.x,
                    end_y_m=u.end_position.y,
                    altitude_m=u.altitude,
                    cpu_hz=u.cpu_rate,
                    capacitance=u.capacitance,
                    tx_power_dbm=watts_to_dbm(u.tx_power),
                    energy_budget_j=u.energy_budget,
                    cruise_speed_mps=u.cruise_speed,
                    quota=u.quota,
                )
                for u in scenario.uavs
            ],
            hap=HapEntry(
                x_m=scenario.hap.position.x,
                y_m=scenario.hap.position.y,
                altitude_m=scenario.hap.position.z,
                cpu_hz=scenario.hap.cpu_rate,
                capacitance=scenario.hap.capacitance,
                energy_budget_j=scenario.hap.energy_budget,
                quota=scenario.hap.quota,
            ),
            channel=ChannelEntry(
                los_a=ch.los_a,
                los_b_per_deg=ch.los_b,
                beta0=ch.beta0,
                pathloss_exp=ch.pathloss_exp,
                nlos_atten=ch.nlos_atten,
                bandwidth_gu_hz=ch.bandwidth_gu,
                noise_power_dbm=watts_to_dbm(ch.noise_power),
                interference_dbm=watts_to_dbm(ch.interference),
                bandwidth_uh_hz=ch.bandwidth_uh,
                antenna_gain=ch.antenna_gain,
                total_loss=ch.total_loss,
                noise_temp_k=ch.noise_temp,
                carrier_freq_hz=ch.carrier_freq,
            ),
            propulsion=PropulsionEntry(
                blade_power_w=pr.blade_power,
                induced_power_w=pr.induced_power,
                tip_speed_mps=pr.tip_speed,
                drag_ratio=pr.drag_ratio,
                air_density_kg_m3=pr.air_density,
                rotor_solidity=pr.rotor_solidity,
                rotor_area_m2=pr.rotor_area,
                mean_rotor_velocity_mps=pr.mean_rotor_velocity,
                model=pr.model,
            ),
            uncertainty=UncertaintyEntry(
                task_samples_mbit=[float(bits_to_mbit(v)) for v in space.values],
                bin_edges_mbit=edges if keep_edges else None,
                eps=eps,
                size_mode=space.size_mode,
            ),
        )


def _read_json(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ValidationError(f"File not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path} is not valid JSON: {e}") from e


def load_scenario(path: Union[str, Path]) -> Tuple[Scenario, SampleSpace, float]:
    """
    Read a scenario file.

    Args:
        path: JSON scenario document

    Returns:
        (scenario in SI units, sample space, ambiguity radius)

    Raises:
        ValidationError: If the file is missing, malformed or has unknown keys
    """
    try:
        doc = ScenarioFile.model_validate(_read_json(path))
        return doc.to_scenario(), doc.to_space(), doc.uncertainty.eps
    except PydanticValidationError as e:
        raise ValidationError(f"Invalid scenario file {path}: {e}") from e


def dump_scenario(scenario: Scenario, space: SampleSpace, eps: float, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = ScenarioFile.from_domain(scenario, space, eps)
    path.write_text(json.dumps(doc.model_dump(mode="json", exclude_none=True), indent=2) + "\n", encoding="utf-8")
    return path


class GeneratorSettings(_FileModel):
    """Parameters of the random scenario generator; defaults come from the defaults file."""

    num_gus: int = Field(..., ge=1, alias="I")
    num_uavs: int = Field(..., ge=1, alias="J")
    num_slots: int = Field(..., ge=1, alias="N")
    slot_len_s: float = Field(..., gt=0)
    area_x_m: float = Field(..., gt=0)
    area_y_m: float = Field(..., gt=0)
    min_separation_m: float = Field(..., ge=0)
    uav_speed_mps: float = Field(..., gt=0)
    uav_altitude_m: float = Field(..., gt=0)
    uav_edge_margin_m: float = Field(..., ge=0)
    reach_fraction: float = Field(..., gt=0, le=0.98)
    hap_x_m: float
    hap_y_m: float
    hap_altitude_m: float = Field(..., gt=0)
    uav_quota: int = Field(..., ge=0)
    hap_quota: int = Field(..., ge=0)
    task_samples_mbit: List[float] = Field(..., min_length=1)
    eps: float = Field(..., ge=0)
    num_samples: int = Field(..., ge=1)
    size_mode: SizeMode
    cpu_cycles_per_bit: float = Field(..., gt=0)
    gu_cpu_hz: float = Field(..., gt=0)
    uav_cpu_hz: float = Field(..., gt=0)
    hap_cpu_hz: float = Field(..., gt=0)
    gu_capacitance: float = Field(..., gt=0)
    uav_capacitance: float = Field(..., gt=0)
    hap_capacitance: float = Field(..., gt=0)
    gu_tx_power_dbm: float
    uav_tx_power_dbm: float
    gu_energy_budget_j: float = Field(..., gt=0)
    uav_energy_budget_j: float = Field(..., gt=0)
    hap_energy_budget_j: float = Field(..., gt=0)
    los_a: float = Field(..., gt=0)
    los_b_per_deg: float = Field(..., gt=0)
    beta0: float = Field(..., gt=0)
    pathloss_exp: float = Field(..., gt=0)
    nlos_atten: float = Field(..., gt=0, le=1)
    bandwidth_gu_hz: float = Field(..., gt=0)
    noise_power_dbm: float
    interference_dbm: float
    bandwidth_uh_hz: float = Field(..., gt=0)
    antenna_gain: float = Field(..., gt=0)
    total_loss: float = Field(..., gt=0)
    noise_temp_k: float = Field(..., gt=0)
    carrier_freq_hz: float = Field(..., gt=0)
    blade_power_w: float = Field(..., gt=0)
    induced_power_w: float = Field(..., gt=0)
    tip_speed_mps: float = Field(..., gt=0)
    drag_ratio: float = Field(..., gt=0)
    air_density_kg_m3: float = Field(..., gt=0)
    rotor_solidity: float = Field(..., gt=0)
    rotor_area_m2: float = Field(..., gt=0)
    mean_rotor_velocity_mps: float = Field(..., gt=0)
    propulsion_model: PropulsionModel

    @classmethod
    def from_defaults(cls, overrides: Optional[Dict[str, Any]] = None) -> "GeneratorSettings":
        """
        Defaults file values with ``overrides`` applied (by field name or short alias).

        Raises:
            ValidationError: If an override key is unknown or a value is invalid
        """
        values = {key: entry["value"] for key, entry in load_defaults().items()}
        aliases = {field.alias: name for name, field in cls.model_fields.items() if field.alias}
        for key, value in (overrides or {}).items():
            name = aliases.get(key, key)
            if name not in cls.model_fields:
                raise ValidationError(f"Unknown generator setting: {key}")
            values[name] = value
        try:
            return cls.model_validate(values)
        except PydanticValidationError as e:
            raise ValidationError(f"Invalid generator settings: {e}") from e


def load_defaults(path: Optional[Union[str, Path]] = None) -> Dict[str, Dict[str, Any]]:
    """
    Read the default parameter table.

    Every entry is ``{"value": ..., "provenance": "stated" | "assumed", "note": ...}``.
    """
    table = _read_json(path or settings.DEFAULTS_FILE)
    for key, entry in table.items():
        if not isinstance(entry, dict) or "value" not in entry:
            raise ValidationError(f"Defaults entry '{key}' has no value")
        if entry.get("provenance") not in ("stated", "assumed"):
            raise ValidationError(f"Defaults entry '{key}' needs provenance 'stated' or 'assumed'")
    return table


class ExperimentConfig(_FileModel):
    """Parameter sweep definition."""

    seed: int = 0
    methods: List[str] = Field(default_factory=lambda: ["do", "so", "drcoto", "ro"])
    gu_counts: List[int] = Field(default_factory=lambda: [6, 9, 12, 15])
    eps_values: List[float] = Field(default_factory=lambda: [0.1, 0.3, 0.5])
    quota_values: List[int] = Field(default_factory=lambda: [1, 2, 3])
    eval_datasets: int = Field(5, ge=1)
    output_dir: str = Field(default_factory=lambda: settings.OUTPUT_DIR)
    overrides: Dict[str, Any] = Field(default_factory=dict)
    tolerances: Dict[str, Any] = Field(default_factory=dict)
    workers: int = Field(1, ge=1)
    record_timing: bool = True

    @field_validator("gu_counts", "quota_values")
    @classmethod
    def _counts(cls, value: List[int]) -> List[int]:
        if any(v < 1 for v in value):
            raise ValueError("counts must be at least 1")
        return value

    @field_validator("eps_values")
    @classmethod
    def _radii(cls, value: List[float]) -> List[float]:
        if any(v < 0 for v in value):
            raise ValueError("eps values must be nonnegative")
        return value

    @field_validator("methods")
    @classmethod
    def _methods(cls, value: List[str]) -> List[str]:
        known = {"do", "so", "ro", "drcoto"}
        unknown = [m for m in value if m not in known]
        if unknown:
            raise ValueError(f"unknown methods: {', '.join(unknown)}")
        return value

    def solver_tolerances(self) -> Tolerances:
        try:
            return Tolerances(**self.tolerances)
        except PydanticValidationError as e:
            raise ValidationError(f"Invalid tolerances: {e}") from e


def load_experiment(path: Union[str, Path]) -> ExperimentConfig:
    """
    Raises:
        ValidationError: If the file is missing, malformed or has unknown keys
    """
    try:
        return ExperimentConfig.model_validate(_read_json(path))
    except PydanticValidationError as e:
        raise ValidationError(f"Invalid experiment config {path}: {e}") from e
