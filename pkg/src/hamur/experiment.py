"""End-to-end runs shared by the CLI and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .checkpoint import save_checkpoint
from .config import ExperimentConfig
from .data import ConfigError, Dataset, DatasetSpec, load_csv, sidecar_path, split
from .metrics import evaluate
from .model import HamurModel
from .train import TrainReport, train


@dataclass
class RunResult:
    config: ExperimentConfig
    model: HamurModel
    report: TrainReport
    test: dict


def load_splits(cfg: ExperimentConfig) -> tuple[Dataset, Dataset, Dataset]:
    if not cfg.data.path:
        raise ConfigError("data.path is not set")
    spec_path = cfg.data.spec or sidecar_path(cfg.data.path)
    spec = DatasetSpec.load(spec_path)
    ds = load_csv(cfg.data.path, spec)
    return split(ds, tuple(cfg.data.ratios), cfg.data.split_seed)


def run(cfg: ExperimentConfig, out_dir=None, splits=None) -> RunResult:
    """Train on the train split, early-stop on valid, score the test split.

    With ``out_dir`` the run directory receives the resolved config, seed,
    per-epoch report, checkpoint and test metrics.
    """
    tr, va, te = splits if splits is not None else load_splits(cfg)
    model = HamurModel(tr.spec, cfg.model)
    report = train(model, tr, va, cfg.train)
    test = evaluate(model, te, cfg.train.eval_batch_size)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cfg.save(out / "config.ini")
        (out / "seed").write_text(f"{cfg.train.seed}\n")
        (out / "report.jsonl").write_text(report.to_lines())
        save_checkpoint(model, cfg, out / "checkpoint.bin")
        (out / "metrics.tsv").write_text(metrics_table(test))
    return RunResult(cfg, model, report, test)


def fmt(v) -> str:
    return "NA" if v is None else f"{v:.6f}"


def metrics_table(result: dict) -> str:
    lines = ["domain\tauc\tlogloss\tn"]
    for key, m in result.items():
        lines.append(f"{key}\t{fmt(m['auc'])}\t{fmt(m['logloss'])}\t{m['n']}")
    return "\n".join(lines) + "\n"


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    """One seed drives both initialisation and batch order; the split keeps its own seed."""
    return cfg.replace(train={"seed": seed}, model={"init_seed": seed})


def baseline_of(cfg: ExperimentConfig) -> ExperimentConfig:
    """Same backbone, adapters off, per-domain independent backbones."""
    return cfg.replace(model={"use_adapter": False, "shared_backbone": False})


def shared_baseline_of(cfg: ExperimentConfig) -> ExperimentConfig:
    """One backbone for every domain, no adapters, no domain id among the inputs."""
    return cfg.replace(model={"use_adapter": False, "shared_backbone": True, "domain_feature": False})


def compare_table(base: dict, hamur: dict) -> str:
    lines = ["domain\tbackbone_auc\thamur_auc\tbackbone_logloss\thamur_logloss"]
    for key in base:
        b, h = base[key], hamur[key]
        lines.append(f"{key}\t{fmt(b['auc'])}\t{fmt(h['auc'])}\t{fmt(b['logloss'])}\t{fmt(h['logloss'])}")
    return "\n".join(lines) + "\n"
