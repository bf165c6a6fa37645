"""AUC / LogLoss, per domain and pooled."""
from __future__ import annotations

import numpy as np

from .data import Dataset, batches

CLIP = 1e-7


class UndefinedMetric(ValueError):
    pass


def tied_rank(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties given their average rank."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(len(x))
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def auc(scores, labels) -> float:
    scores, labels = np.asarray(scores, dtype=np.float64), np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError(f"auc: {scores.shape} scores vs {labels.shape} labels")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("AUC needs at least one positive and one negative label")
    r = tied_rank(scores)
    return float((r[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def logloss(scores, labels) -> float:
    p = np.clip(np.asarray(scores, dtype=np.float64), CLIP, 1 - CLIP)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"logloss: {p.shape} scores vs {y.shape} labels")
    return float(np.mean(-y * np.log(p) - (1 - y) * np.log(1 - p)))


def _metrics(scores, labels) -> dict:
    try:
        a = auc(scores, labels)
    except UndefinedMetric:
        a = None
    return {"auc": a, "logloss": logloss(scores, labels) if len(labels) else None, "n": int(len(labels))}


def summarize(scores, labels, domains, num_domains: int, total: str = "pooled") -> dict:
    """Per-domain metrics keyed 1..D plus ``"total"``; AUC is None where undefined.

    ``total="pooled"`` scores the union of predictions; ``"macro"`` averages the
    per-domain values instead.
    """
    scores, labels, domains = map(np.asarray, (scores, labels, domains))
    out = {d: _metrics(scores[domains == d], labels[domains == d]) for d in range(1, num_domains + 1)}
    if total == "pooled":
        out["total"] = _metrics(scores, labels)
    elif total == "macro":
        per = [out[d] for d in range(1, num_domains + 1) if out[d]["n"]]
        aucs = [m["auc"] for m in per if m["auc"] is not None]
        out["total"] = {"auc": float(np.mean(aucs)) if aucs else None,
                        "logloss": float(np.mean([m["logloss"] for m in per])) if per else None,
                        "n": int(len(labels))}
    else:
        raise ValueError(f"unknown total mode {total!r}")
    return out


def predict(model, dataset: Dataset, batch_size: int = 8192, use_adapters: bool | None = None) -> np.ndarray:
    """Eval-mode probabilities for every row, in dataset order."""
    out = np.empty(len(dataset))
    for b in batches(dataset, batch_size, seed=None):
        out[b.index] = model.forward_batch(b, mode="eval", use_adapters=use_adapters).data
    return out


def evaluate(model, dataset: Dataset, batch_size: int = 8192, total: str = "pooled") -> dict:
    scores = predict(model, dataset, batch_size)
    return summarize(scores, dataset.label, dataset.domain, dataset.spec.num_domains, total)


def metric_records(result: dict, **extra) -> list[dict]:
    """Flatten an ``evaluate`` result into key-value records, one per domain plus total."""
    rows = []
    for key, m in result.items():
        rows.append({**extra, "domain": str(key), **m})
    return rows
