"""Run configuration: a flat key-value file with dotted section keys,
strict unknown-key checking, and content hashes for provenance."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .sim import AgentConfig


@dataclass
class AgentSection:
    step_size: float = 0.40
    rotation_deg: float = 30.0
    body_radius: float = 0.15
    ray_count: int = 32
    fov_deg: float = 120.0
    max_range: float = 4.0


@dataclass
class EnvsSection:
    einv_count: int = 4
    einv_width: int = 96
    einv_height: int = 96
    einv_rooms: int = 6
    einv_seed_base: int = 1000
    evideo_count: int = 6
    evideo_width: int = 256
    evideo_height: int = 256
    evideo_rooms: int = 14
    evideo_seed_base: int = 2000
    eval_count: int = 1
    eval_width: int = 96
    eval_height: int = 96
    eval_rooms: int = 6
    eval_seed_base: int = 3000
    etest_count: int = 1
    etest_width: int = 128
    etest_height: int = 128
    etest_rooms: int = 6
    etest_seed_base: int = 4000
    door_width: int = 9
    target_rooms: int = 1


@dataclass
class VideoSection:
    count: int = 2000
    length: int = 40
    min_goal_steps: int = 20


@dataclass
class CollectSection:
    starts: int = 1500
    steps: int = 30


@dataclass
class InverseSection:
    hidden1: int = 64
    hidden2: int = 64
    batch: int = 64
    lr: float = 0.001
    epochs: int = 12
    val_frac: float = 0.1


@dataclass
class SubrSection:
    count: int = 4
    clip_len: int = 10
    stride: int = 5
    batch: int = 64
    lr: float = 0.001
    lr_end: float = 0.0002
    epochs: int = 30
    tau_start: float = 1.0
    tau_end: float = 0.5
    affordance_weight: float = 1.0
    encoder_hidden: int = 32
    policy_hidden: int = 64


@dataclass
class ExploreSection:
    episode_len: int = 408
    starts: int = 100
    runs: int = 5
    window: int = 10
    coverage_radius: float = 0.5


@dataclass
class IouSection:
    starts: int = 5
    rollouts: int = 6
    windows: int = 3


@dataclass
class AblateSection:
    samples_grid: str = "5000,45000,90000"
    clip_grid: str = "6,10,14"
    nsub_grid: str = "2,4,8"
    epochs: int = 12
    videos: int = 800
    starts: int = 30
    runs: int = 2


@dataclass
class HrlSection:
    task: str = "pointgoal"
    reward: str = "sparse"
    budget: int = 200000
    gamma: float = 0.99
    lr: float = 0.001
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    seeds: int = 3
    max_steps: int = 60
    meta_interval: int = 5
    update_windows: int = 8
    record_every: int = 2000
    success_threshold: float = 0.8
    goal_pool: int = 50
    map_width: int = 48
    map_height: int = 48
    map_rooms: int = 4
    map_door_width: int = 7
    area_map_width: int = 80
    area_map_height: int = 80
    area_map_rooms: int = 5
    fine_tune_subs: bool = True
    flat_budget: int = 60000


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "runs/default"
    agent: AgentSection = field(default_factory=AgentSection)
    envs: EnvsSection = field(default_factory=EnvsSection)
    video: VideoSection = field(default_factory=VideoSection)
    collect: CollectSection = field(default_factory=CollectSection)
    inverse: InverseSection = field(default_factory=InverseSection)
    subr: SubrSection = field(default_factory=SubrSection)
    explore: ExploreSection = field(default_factory=ExploreSection)
    iou: IouSection = field(default_factory=IouSection)
    ablate: AblateSection = field(default_factory=AblateSection)
    hrl: HrlSection = field(default_factory=HrlSection)

    def agent_config(self) -> AgentConfig:
        a = self.agent
        return AgentConfig(step_size=a.step_size,
                           rotation_angle=math.radians(a.rotation_deg),
                           body_radius=a.body_radius, ray_count=a.ray_count,
                           fov=math.radians(a.fov_deg), max_range=a.max_range)

    def split_seed_ranges(self) -> dict[str, tuple[int, int]]:
        e = self.envs
        return {
            "einv": (e.einv_seed_base, e.einv_seed_base + e.einv_count),
            "evideo": (e.evideo_seed_base, e.evideo_seed_base + e.evideo_count),
            "eval": (e.eval_seed_base, e.eval_seed_base + e.eval_count),
            # the HRL task map takes one extra seed from the etest range
            "etest": (e.etest_seed_base, e.etest_seed_base + e.etest_count + 1),
        }

    def check_splits_disjoint(self) -> None:
        ranges = sorted(self.split_seed_ranges().items(), key=lambda kv: kv[1][0])
        for (name_a, (_, hi)), (name_b, (lo, _)) in zip(ranges, ranges[1:]):
            if hi > lo:
                raise ConfigError(f"environment seed ranges overlap: {name_a} and {name_b}")


_SECTIONS = ("agent", "envs", "video", "collect", "inverse", "subr",
             "explore", "iou", "ablate", "hrl")


def known_keys() -> dict[str, type]:
    keys: dict[str, type] = {"seed": int, "out": str}
    cfg = RunConfig()
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        for f in fields(obj):
            keys[f"{section}.{f.name}"] = type(getattr(obj, f.name))
    return keys


def _parse_value(raw: str, target: type, key: str):
    raw = raw.strip()
    try:
        if target is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if target is int:
            return int(raw)
        if target is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} (expected {target.__name__})") from exc


def apply_overrides(cfg: RunConfig, overrides: dict[str, str]) -> RunConfig:
    keys = known_keys()
    for key, raw in overrides.items():
        if key not in keys:
            raise ConfigError(f"unknown config key {key!r}")
        value = _parse_value(raw, keys[key], key)
        if "." in key:
            section, name = key.split(".", 1)
            setattr(getattr(cfg, section), name, value)
        else:
            setattr(cfg, key, value)
    return cfg


def parse_config_text(text: str) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key in overrides:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        overrides[key] = raw.strip()
    return overrides


def load_config(path: str | Path | None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return apply_overrides(cfg, parse_config_text(p.read_text(encoding="utf-8")))


def config_to_text(cfg: RunConfig) -> str:
    lines = [f"seed = {cfg.seed}", f"out = {cfg.out}"]
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        for f in fields(obj):
            lines.append(f"{section}.{f.name} = {getattr(obj, f.name)!r}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(config_to_text(cfg).encode("utf-8")).hexdigest()


def arch_hash(cfg: RunConfig) -> str:
    """Hash of the fields that fix model shapes; bundles refuse to load
    against a config with a different value."""
    parts = (cfg.agent.ray_count, cfg.inverse.hidden1, cfg.inverse.hidden2,
             cfg.subr.count, cfg.subr.clip_len, cfg.subr.encoder_hidden,
             cfg.subr.policy_hidden)
    return hashlib.sha256(repr(parts).encode("utf-8")).hexdigest()


def parse_int_grid(raw: str, key: str) -> list[int]:
    try:
        return [int(tok) for tok in raw.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad integer grid for {key}: {raw!r}") from exc
