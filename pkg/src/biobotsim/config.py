"""Run configuration: versioned JSON schema, strict loading, adapters.

Configs are plain JSON with unit-suffixed keys in SI units.  Loading is
strict: unknown keys anywhere in the tree are rejected with their full
path, so typos fail loudly instead of silently using defaults.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union, get_args, get_origin, get_type_hints

from .assembly import (DEFAULT_ALPHA_LOWER, DEFAULT_ALPHA_UPPER,
                       DEFAULT_HANDLING_GAP, DEFAULT_STEP_DURATIONS,
                       EVENT_ORDER, PayloadSpec, PixelToArmCalibration,
                       Workspace)
from .locomotion import AgentParams, PRESETS
from .morphology import (ABDOMINAL_CUTICLE_LENGTH_RANGE,
                         ABDOMINAL_CUTICLE_THICKNESS_RANGE,
                         ANTENNA_DIAMETER_RANGE, BODY_LENGTH_RANGE,
                         FixationRig, PRONOTUM_LENGTH_RANGE,
                         PRONOTUM_THICKNESS_RANGE)
from .swarm import Arena, Rect, UwbSystem, default_anchors

SCHEMA_VERSION = 1


class ConfigError(Exception):
    """Invalid run configuration; message carries the offending path."""


# ---------- schema blocks ----------

@dataclass(frozen=True)
class MorphologyConfig:
    body_length_range_m: tuple[float, float] = BODY_LENGTH_RANGE
    pronotum_length_range_m: tuple[float, float] = PRONOTUM_LENGTH_RANGE
    pronotum_thickness_range_m: tuple[float, float] = PRONOTUM_THICKNESS_RANGE
    abdominal_cuticle_length_range_m: tuple[float, float] = ABDOMINAL_CUTICLE_LENGTH_RANGE
    abdominal_cuticle_thickness_range_m: tuple[float, float] = ABDOMINAL_CUTICLE_THICKNESS_RANGE
    antenna_diameter_range_m: tuple[float, float] = ANTENNA_DIAMETER_RANGE


@dataclass(frozen=True)
class RigConfig:
    rod_a_initial_clearance_m: float = 4.0e-3
    lowered_distance_d_m: float = 3.5e-3
    saturation_d_m: float = 3.5e-3
    saturation_height_h_max_m: float = 1.9e-3
    electrode_thickness_m: float = 0.6e-3
    lifting_jitter_sd_m: float = 0.0


@dataclass(frozen=True)
class CalibrationConfig:
    scale_x_m_per_px: float = 1.0
    scale_y_m_per_px: float = 1.0
    offset_x_m: float = 0.0
    offset_y_m: float = 0.0
    offset_z_m: float = 0.0


@dataclass(frozen=True)
class PayloadConfig:
    gripper_mass_kg: float = 1.0
    camera_mass_kg: float = 0.075
    backpack_mass_kg: float = 0.0023
    arm_payload_limit_kg: float = 3.0
    arm_reach_m: float = 0.5
    camera_min_depth_m: float = 0.28


@dataclass(frozen=True)
class AssemblyConfig:
    alpha_lower_deg: float = DEFAULT_ALPHA_LOWER
    alpha_upper_deg: float = DEFAULT_ALPHA_UPPER
    step_durations_s: dict = field(default_factory=lambda: dict(DEFAULT_STEP_DURATIONS))
    handling_gap_s: float = DEFAULT_HANDLING_GAP
    workspace_box_m: tuple[float, float, float] = (0.065, 0.035, 0.025)
    approach_envelope_m: tuple[float, float, float] = (0.010, 0.010, 0.010)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    payload: PayloadConfig = field(default_factory=PayloadConfig)


@dataclass(frozen=True)
class NeuroConfig:
    sample_rate_hz: float = 25000.0
    bandpass_low_hz: float = 300.0
    bandpass_high_hz: float = 5000.0
    blank_window_s: float = 0.050
    blank_edge_times_s: tuple[float, ...] = (0.0, 0.5, 1.0)
    refractory_s: float = 0.001
    synth_duration_s: float = 1.2
    synth_noise_sd_v: float = 10e-6
    r_min_hz: float = 2.0
    r_max_hz: float = 40.0


@dataclass(frozen=True)
class LocomotionConfig:
    preset: str = "auto"
    turn_angle_sd_deg: Optional[float] = None
    heading_diffusion_deg2_s: Optional[float] = None
    recovery_tau_s: Optional[float] = None
    command_duration_s: Optional[float] = None


@dataclass(frozen=True)
class ArenaConfig:
    width_m: float = 2.0
    height_m: float = 2.0
    release_corner: str = "sw"
    obstacles_m: Optional[tuple[tuple[float, float, float, float], ...]] = None


@dataclass(frozen=True)
class UwbConfig:
    anchors_m: tuple[tuple[float, float], ...] = default_anchors()
    range_noise_sd_m: float = 0.05


@dataclass(frozen=True)
class SwarmConfig:
    n_agents: int = 4
    stim_period_s: float = 10.0
    duration_s: float = 631.0
    dt_s: float = 0.01
    log_rate_hz: float = 10.0
    coverage_from: str = "true"
    cell_size_m: float = 0.10
    arena: ArenaConfig = field(default_factory=ArenaConfig)
    uwb: UwbConfig = field(default_factory=UwbConfig)


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 42
    output_dir: str = "out"
    morphology: MorphologyConfig = field(default_factory=MorphologyConfig)
    rig: RigConfig = field(default_factory=RigConfig)
    assembly: AssemblyConfig = field(default_factory=AssemblyConfig)
    neurosignal: NeuroConfig = field(default_factory=NeuroConfig)
    locomotion: LocomotionConfig = field(default_factory=LocomotionConfig)
    swarm: SwarmConfig = field(default_factory=SwarmConfig)


# ---------- strict construction ----------

def _type_name(tp) -> str:
    return getattr(tp, "__name__", str(tp))


def _coerce(tp, value, path: str):
    origin = get_origin(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object")
        return _build_dataclass(tp, value, path)
    if origin is Union:
        args = [a for a in get_args(tp) if a is not type(None)]
        if value is None:
            if type(None) in get_args(tp):
                return None
            raise ConfigError(f"{path}: null is not allowed")
        return _coerce(args[0], value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected an array")
        args = get_args(tp)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v, f"{path}[{i}]")
                         for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(
                f"{path}: expected {len(args)} entries, got {len(value)}"
            )
        return tuple(_coerce(a, v, f"{path}[{i}]")
                     for i, (a, v) in enumerate(zip(args, value)))
    if tp is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object")
        return dict(value)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported config field type {_type_name(tp)}")


def _build_dataclass(cls, data: dict, path: str):
    hints = get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        key = sorted(unknown)[0]
        where = f"{path}.{key}" if path else key
        raise ConfigError(f"{where}: unknown key")
    kwargs = {}
    for name, f in fields.items():
        if name in data:
            sub = f"{path}.{name}" if path else name
            kwargs[name] = _coerce(hints[name], data[name], sub)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path or cls.__name__}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a JSON object")
    if "schema_version" not in data:
        raise ConfigError("schema_version: required key is missing")
    cfg = _build_dataclass(RunConfig, data, "")
    if cfg.schema_version != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version: expected {SCHEMA_VERSION}, got {cfg.schema_version}"
        )
    _validate(cfg)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    return config_from_dict(data)


def _validate(cfg: RunConfig):
    if cfg.locomotion.preset not in PRESETS:
        raise ConfigError(
            f"locomotion.preset: must be one of {sorted(PRESETS)}, "
            f"got {cfg.locomotion.preset!r}"
        )
    durations = cfg.assembly.step_durations_s
    extra = set(durations) - set(EVENT_ORDER)
    if extra:
        raise ConfigError(
            f"assembly.step_durations_s.{sorted(extra)[0]}: unknown step"
        )
    missing = set(EVENT_ORDER) - set(durations)
    if missing:
        raise ConfigError(
            f"assembly.step_durations_s: missing step {sorted(missing)[0]!r}"
        )
    for name, dur in durations.items():
        if isinstance(dur, bool) or not isinstance(dur, (int, float)) or dur <= 0:
            raise ConfigError(
                f"assembly.step_durations_s.{name}: expected a positive number"
            )
    if cfg.swarm.coverage_from not in ("true", "estimated"):
        raise ConfigError(
            f"swarm.coverage_from: must be 'true' or 'estimated', "
            f"got {cfg.swarm.coverage_from!r}"
        )
    if cfg.swarm.n_agents < 1:
        raise ConfigError("swarm.n_agents: must be at least 1")
    for name in ("stim_period_s", "duration_s", "dt_s", "log_rate_hz", "cell_size_m"):
        if getattr(cfg.swarm, name) <= 0:
            raise ConfigError(f"swarm.{name}: must be positive")
    # constructing the domain objects runs their own invariants
    try:
        rig_from_config(cfg.rig)
        arena_from_config(cfg.swarm.arena)
        uwb_from_config(cfg.swarm.uwb)
        agent_params_from_config(cfg.locomotion)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


# ---------- serialization ----------

def config_to_dict(cfg: RunConfig) -> dict:
    def unfold(value):
        if dataclasses.is_dataclass(value):
            return {f.name: unfold(getattr(value, f.name))
                    for f in dataclasses.fields(value)}
        if isinstance(value, tuple):
            return [unfold(v) for v in value]
        if isinstance(value, dict):
            return {k: unfold(v) for k, v in value.items()}
        return value

    return unfold(cfg)


def config_digest(cfg: RunConfig) -> str:
    """Hash of the scientific content of a config.

    output_dir is excluded: it decides where files land, not what is
    computed, and reruns into different directories must hash alike.
    """
    d = config_to_dict(cfg)
    d.pop("output_dir", None)
    canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------- adapters to domain objects ----------

def rig_from_config(c: RigConfig) -> FixationRig:
    return FixationRig(
        rod_a_initial_clearance=c.rod_a_initial_clearance_m,
        lowered_distance_d=c.lowered_distance_d_m,
        saturation_d=c.saturation_d_m,
        saturation_height_h_max=c.saturation_height_h_max_m,
        electrode_thickness=c.electrode_thickness_m,
    )


def calibration_from_config(c: CalibrationConfig) -> PixelToArmCalibration:
    return PixelToArmCalibration(
        scale_x=c.scale_x_m_per_px, scale_y=c.scale_y_m_per_px,
        offset_x=c.offset_x_m, offset_y=c.offset_y_m, offset_z=c.offset_z_m,
    )


def payload_from_config(c: PayloadConfig) -> PayloadSpec:
    return PayloadSpec(
        gripper_mass=c.gripper_mass_kg, camera_mass=c.camera_mass_kg,
        backpack_mass=c.backpack_mass_kg,
        arm_payload_limit=c.arm_payload_limit_kg, arm_reach=c.arm_reach_m,
        camera_min_depth=c.camera_min_depth_m,
    )


def workspace_from_config(c: AssemblyConfig) -> Workspace:
    return Workspace(box_dimensions=c.workspace_box_m)


def agent_params_from_config(c: LocomotionConfig) -> AgentParams:
    params = PRESETS[c.preset] if c.preset in PRESETS else None
    if params is None:
        raise ValueError(f"unknown locomotion preset {c.preset!r}")
    overrides = {}
    if c.turn_angle_sd_deg is not None:
        overrides["turn_angle_sd"] = c.turn_angle_sd_deg
    if c.heading_diffusion_deg2_s is not None:
        overrides["heading_diffusion"] = c.heading_diffusion_deg2_s
    if c.recovery_tau_s is not None:
        overrides["recovery_tau"] = c.recovery_tau_s
    if c.command_duration_s is not None:
        overrides["command_duration"] = c.command_duration_s
    return dataclasses.replace(params, **overrides) if overrides else params


def arena_from_config(c: ArenaConfig) -> Arena:
    if c.obstacles_m is None:
        from .swarm import DEFAULT_OBSTACLES
        obstacles = DEFAULT_OBSTACLES
    else:
        obstacles = tuple(Rect(*r) for r in c.obstacles_m)
    return Arena(width=c.width_m, height=c.height_m, obstacles=obstacles,
                 release_corner=c.release_corner)


def uwb_from_config(c: UwbConfig) -> UwbSystem:
    return UwbSystem(anchors=c.anchors_m, range_noise_sd=c.range_noise_sd_m)
