"""Experiment configuration: flat INI sections, every default written back on save."""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

from .backbones import KINDS
from .data import ConfigError


@dataclass
class DataConfig:
    path: str = ""
    spec: str = ""             # sidecar json; defaults to <path stem>.spec.json
    split_seed: int = 0
    ratios: list[float] = field(default_factory=lambda: [0.8, 0.1, 0.1])


@dataclass
class ModelConfig:
    backbone: str = "mlp"
    hidden: list[int] = field(default_factory=lambda: [256, 128])
    cross_layers: int = 2
    sites: list[int] = field(default_factory=lambda: [1])
    embedding_dim: int = 16
    bottleneck: int = 32
    hyper_dim: int = 64
    rank: int = 35
    use_adapter: bool = True
    shared_backbone: bool = False
    domain_feature: bool = True
    dn_momentum: float = 0.9
    dn_eps: float = 1e-5
    detach_stats: bool = False
    init_seed: int = 0


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 2048
    max_epochs: int = 20
    patience: int = 3
    seed: int = 0
    eval_batch_size: int = 8192


@dataclass
class OutputConfig:
    dir: str = "runs/default"


SECTIONS = {"data": DataConfig, "model": ModelConfig, "train": TrainConfig, "output": OutputConfig}


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self) -> "ExperimentConfig":
        m, t = self.model, self.train
        for name in ("embedding_dim", "bottleneck", "hyper_dim", "rank", "cross_layers"):
            if getattr(m, name) <= 0:
                raise ConfigError(f"model.{name} must be positive, got {getattr(m, name)}")
        if not m.hidden or any(w <= 0 for w in m.hidden):
            raise ConfigError(f"model.hidden must be non-empty positive widths, got {m.hidden}")
        if m.backbone not in KINDS:
            raise ConfigError(f"model.backbone must be one of {KINDS}, got {m.backbone!r}")
        if m.use_adapter:
            if not m.sites:
                raise ConfigError("model.sites must list at least one position when use_adapter is on")
            for p in m.sites:
                if not 1 <= p <= len(m.hidden):
                    raise ConfigError(f"model.sites position {p} outside 1..{len(m.hidden)}")
            narrowest = min(m.hidden[p - 1] for p in m.sites)
            if m.bottleneck >= narrowest:
                raise ConfigError(f"model.bottleneck {m.bottleneck} must be < narrowest site width {narrowest}")
        if not 0 <= m.dn_momentum < 1 or m.dn_eps <= 0:
            raise ConfigError("model.dn_momentum must be in [0, 1) and model.dn_eps > 0")
        for name in ("batch_size", "max_epochs", "patience", "eval_batch_size"):
            if getattr(t, name) <= 0:
                raise ConfigError(f"train.{name} must be positive, got {getattr(t, name)}")
        if t.lr <= 0:
            raise ConfigError(f"train.lr must be positive, got {t.lr}")
        if len(self.data.ratios) != 3 or abs(sum(self.data.ratios) - 1) > 1e-9:
            raise ConfigError(f"data.ratios must be three values summing to 1, got {self.data.ratios}")
        return self

    def to_text(self) -> str:
        cp = configparser.ConfigParser()
        for sec in SECTIONS:
            obj = getattr(self, sec)
            cp[sec] = {f.name: _fmt(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def hash(self) -> bytes:
        """Digest of everything that shapes the model; output dir and data path excluded."""
        text = "\n".join(f"{f.name}={_fmt(getattr(self.model, f.name))}" for f in dataclasses.fields(self.model))
        return hashlib.sha256(text.encode()).digest()

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"unparseable config: {e}") from e
        cfg = cls()
        for sec in cp.sections():
            if sec not in SECTIONS:
                raise ConfigError(f"unknown config section [{sec}]")
            obj = getattr(cfg, sec)
            types = {f.name: f for f in dataclasses.fields(obj)}
            for key, raw in cp[sec].items():
                if key not in types:
                    raise ConfigError(f"unknown config field {sec}.{key}")
                setattr(obj, key, _parse(raw, getattr(obj, key), f"{sec}.{key}"))
        return cfg.validate()

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        cfg = cls.from_text(text)
        base = Path(path).parent
        for attr in ("path", "spec"):
            val = getattr(cfg.data, attr)
            if val and not Path(val).is_absolute():
                setattr(cfg.data, attr, str(base / val))
        return cfg

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with per-section overrides, e.g. ``replace(model={"rank": 5})``."""
        new = ExperimentConfig(*(dataclasses.replace(getattr(self, s), **sections.get(s, {})) for s in SECTIONS))
        return new.validate()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(raw: str, default, where: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            item = type(default[0]) if default else int
            return [item(x) for x in raw.replace(",", " ").split()]
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None


def movielens_config(backbone: str = "mlp") -> ExperimentConfig:
    """Defaults for MovieLens; DCN and Wide&Deep use their compatibility-run settings."""
    cfg = ExperimentConfig()
    if backbone == "dcn":
        cfg.model = dataclasses.replace(cfg.model, backbone="dcn", cross_layers=2, hyper_dim=128, rank=30)
    elif backbone == "wide_deep":
        cfg.model = dataclasses.replace(cfg.model, backbone="wide_deep", hyper_dim=128, rank=45)
    return cfg.validate()


def aliccp_config(backbone: str = "mlp") -> ExperimentConfig:
    cfg = ExperimentConfig()
    if backbone == "mlp":
        cfg.model = dataclasses.replace(cfg.model, hidden=[512, 256, 256, 128, 128, 64, 64], sites=[5, 6], rank=65)
    elif backbone == "dcn":
        cfg.model = dataclasses.replace(cfg.model, backbone="dcn", hidden=[512, 256, 256, 128, 128, 64],
                                        cross_layers=7, sites=[5], rank=25)
    else:
        cfg.model = dataclasses.replace(cfg.model, backbone="wide_deep", hidden=[512, 256, 256, 128, 128, 64],
                                        sites=[5], rank=25)
    return cfg.validate()
