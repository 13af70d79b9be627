"""Pipeline configuration: dataclasses, JSON loading, validation and hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .decoders.base import FEATURE_MODE, KINDS
from .decoders.train import TrainConfig
from .errors import ConfigError
from .features import FeatureConfig

VARIANTS = ("gt", "evfilter", "spd")
OUTPUT_ROOT_ENV = "EVDECODE_OUTPUT_ROOT"


@dataclass
class SynthConfig:
    n_reaches: int = 200
    n_channels: int = 96
    sample_period_us: int = 4000
    workspace: float = 1.0
    reach_ms: tuple = (400.0, 700.0)
    hold_ms: float = 100.0
    baseline_hz: tuple = (1.0, 4.0)
    depth_hz: tuple = (2.0, 5.0)
    lead_ms: float = 100.0


@dataclass
class EncoderConfig:
    delta: float = 1.0
    spike_amplitude: float = 2.0
    noise_std: float = 0.27
    sample_rate_hz: int = 24000


@dataclass
class FilterConfig:
    n_th: int = 2
    tau_us: int = 500
    t_ref_us: int = 0
    spd_t_ref_us: int = 1000


@dataclass
class DataConfig:
    """External recordings; when ``events`` is set the synthetic generator is skipped."""

    events: str | None = None
    events_format: str = "binary"
    trajectory: str | None = None
    spikes: str | None = None


def default_features() -> dict:
    return {
        "NN": FeatureConfig(200, 4, 1, "frame"),
        "ST_NN": FeatureConfig(200, 4, 8, "segmented"),
        "LSTM": FeatureConfig(34, 4, 1, "frame"),
        "SNN": FeatureConfig(4, 4, 1, "binary"),
        "LINEAR": FeatureConfig(300, 4, 1, "frame"),
    }


@dataclass
class PipelineConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    features: dict = field(default_factory=default_features)
    train: TrainConfig = field(default_factory=TrainConfig)
    decoders: list = field(default_factory=lambda: list(KINDS))
    inputs: list = field(default_factory=lambda: list(VARIANTS))
    seeds: dict = field(default_factory=lambda: {"synth": 1, "encode": 1, "split": 0, "train": 0})
    data: DataConfig = field(default_factory=DataConfig)
    output_dir: str = "runs/default"

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["features"] = {k: dataclasses.asdict(v) for k, v in self.features.items()}
        return d

    def hash(self) -> str:
        """Digest of everything that determines outputs (the output location excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:32]

    def output_path(self) -> Path:
        root = os.environ.get(OUTPUT_ROOT_ENV)
        p = Path(self.output_dir)
        return Path(root) / p if root and not p.is_absolute() else p


def _build(cls, raw: dict, where: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(raw: dict) -> PipelineConfig:
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    feats = default_features()
    for kind, fc in (raw.get("features") or {}).items():
        feats[kind] = _build(FeatureConfig, fc, f"features.{kind}")
    cfg = PipelineConfig(
        synth=_build(SynthConfig, raw.get("synth"), "synth"),
        encoder=_build(EncoderConfig, raw.get("encoder"), "encoder"),
        filter=_build(FilterConfig, raw.get("filter"), "filter"),
        features=feats,
        train=_build(TrainConfig, raw.get("train"), "train"),
        data=_build(DataConfig, raw.get("data"), "data"),
    )
    if "decoders" in raw:
        cfg.decoders = list(raw["decoders"])
    if "inputs" in raw:
        cfg.inputs = list(raw["inputs"])
    if "seeds" in raw:
        cfg.seeds = dict(raw["seeds"])
    if "output_dir" in raw:
        cfg.output_dir = raw["output_dir"]
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(raw)


def validate_config(cfg: PipelineConfig) -> list[str]:
    """Every violation found, in a stable order; empty when the config is usable."""
    out = []
    for k in cfg.decoders:
        if k not in KINDS:
            out.append(f"unknown decoder kind {k!r}")
    for v in cfg.inputs:
        if v not in VARIANTS:
            out.append(f"unknown input variant {v!r}")
    for k in cfg.decoders:
        if k not in KINDS:
            continue
        fc = cfg.features.get(k)
        if fc is None:
            out.append(f"no feature configuration for decoder {k}")
            continue
        out += [f"features.{k}: {m}" for m in fc.violations()]
        want = FEATURE_MODE[k]
        ok = fc.mode in ("frame", "segmented") if k == "LINEAR" else fc.mode == want
        if not ok:
            out.append(f"features.{k}: decoder {k} is incompatible with {fc.mode} features (needs {want})")
        if (fc.t_s_ms * 1000) % cfg.synth.sample_period_us:
            out.append(f"features.{k}: stride {fc.t_s_ms} ms is not a multiple of the kinematic sample period")
    if cfg.data.events is None and cfg.synth.n_reaches < 4:
        out.append(f"synth.n_reaches={cfg.synth.n_reaches}: the 50/25/25 split needs at least 4 reaches")
    for name in ("events", "trajectory", "spikes"):
        p = getattr(cfg.data, name)
        if p is not None and not Path(p).exists():
            out.append(f"data.{name}: file not found: {p}")
    if cfg.data.events is not None and cfg.data.trajectory is None:
        out.append("data.trajectory is required when data.events is given")
    if cfg.data.events is not None and "gt" in cfg.inputs and cfg.data.spikes is None:
        out.append("input variant 'gt' needs data.spikes when external events are used")
    for s in ("synth", "encode", "split", "train"):
        if not isinstance(cfg.seeds.get(s), int):
            out.append(f"seeds.{s} must be an explicit integer")
    if cfg.encoder.delta <= 0:
        out.append("encoder.delta must be > 0")
    if cfg.filter.tau_us <= 0 or cfg.filter.n_th < 0 or cfg.filter.t_ref_us < 0:
        out.append("filter parameters out of range")
    if cfg.train.epochs < 0 or cfg.train.batch_size < 2:
        out.append("train.epochs must be >= 0 and train.batch_size >= 2")
    return out
