from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .data import Dataset, batches
from .metrics import evaluate
from .model import HamurModel, bce_loss
from .optim import Adam
from .tensor import Tape

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


@dataclass
class TrainReport:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    seconds: float = 0.0

    @property
    def losses(self) -> list[float]:
        return [e["train_loss"] for e in self.epochs]

    def to_lines(self) -> str:
        """One JSON record per epoch, then a summary record."""
        lines = [json.dumps(e, sort_keys=True) for e in self.epochs]
        lines.append(json.dumps({"best_epoch": self.best_epoch, "seconds": round(self.seconds, 3)}, sort_keys=True))
        return "\n".join(lines) + "\n"


def _snapshot(model: HamurModel) -> dict[str, np.ndarray]:
    out = {k: p.data.copy() for k, p in model.parameters().items()}
    out.update({k: v.copy() for k, v in model.buffers().items()})
    return out


def _restore(model: HamurModel, snap: dict[str, np.ndarray]) -> None:
    params, bufs = model.parameters(), model.buffers()
    for k, v in snap.items():
        (params[k].data if k in params else bufs[k])[...] = v


def train_step(model: HamurModel, opt: Adam, batch) -> float:
    opt.zero_grad()
    with Tape() as tape:
        loss = bce_loss(model.forward_batch(batch, mode="train"), batch.label)
    value = loss.item()
    if not np.isfinite(value):
        raise DivergenceError(f"non-finite loss {value} at optimizer step {opt.step_count + 1}")
    tape.backward(loss)
    opt.step()
    return value


def train(model: HamurModel, train_ds: Dataset, valid_ds: Dataset | None, cfg: TrainConfig,
          total: str = "pooled") -> TrainReport:
    """Epochs of shuffled mini-batch Adam; early-stops on pooled validation AUC and
    restores the best epoch's parameters before returning."""
    opt = Adam(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    report = TrainReport()
    best_score, best_snap, stale = (-np.inf, -np.inf), None, 0
    t0 = time.perf_counter()
    for epoch in range(cfg.max_epochs):
        te = time.perf_counter()
        loss_sum, n = 0.0, 0
        for batch in batches(train_ds, cfg.batch_size, cfg.seed, epoch):
            loss_sum += train_step(model, opt, batch) * len(batch)
            n += len(batch)
        record = {"epoch": epoch, "train_loss": loss_sum / max(n, 1)}
        if valid_ds is not None and len(valid_ds):
            res = evaluate(model, valid_ds, cfg.eval_batch_size, total)
            record["valid"] = {str(k): v for k, v in res.items()}
            auc, ll = res["total"]["auc"], res["total"]["logloss"]
            # ties on AUC fall to the lower validation logloss
            score = (-np.inf if auc is None else auc, -ll)
            if score > best_score:
                best_score, best_snap, stale = score, _snapshot(model), 0
                report.best_epoch = epoch
            else:
                stale += 1
        else:
            best_snap, report.best_epoch = _snapshot(model), epoch
        record["seconds"] = round(time.perf_counter() - te, 3)
        report.epochs.append(record)
        log.info("epoch %d loss %.6f valid auc %s", epoch, record["train_loss"],
                 record.get("valid", {}).get("total", {}).get("auc"))
        if stale >= cfg.patience:
            break
    if best_snap is not None:
        _restore(model, best_snap)
    report.seconds = time.perf_counter() - t0
    return report
