"""The assembled multi-domain model: shared embeddings and hyper-network,
per-domain backbones, per-(domain, site) low-rank factors and normalisation."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .adapter import DomainNormState, adapter_forward_lowrank
from .backbones import build_backbone
from .config import ModelConfig
from .data import Batch, DataError, DatasetSpec
from .embedding import EmbeddingTables
from .hyper import HyperNetwork, LowRankFactors
from .tensor import Tensor

CLIP = 1e-7


class HamurModel:
    def __init__(self, spec: DatasetSpec, cfg: ModelConfig):
        self.spec = spec
        self.cfg = cfg
        D = spec.num_domains
        rng = np.random.default_rng(cfg.init_seed)
        names, sizes = spec.field_names, spec.vocab_sizes
        if cfg.domain_feature:
            names, sizes = names + ["domain"], sizes + [D + 1]
        self.embedding = EmbeddingTables(names, sizes, cfg.embedding_dim, rng)
        width = self.embedding.out_dim

        n_backbones = 1 if cfg.shared_backbone else D
        self.backbones = [build_backbone(cfg.backbone, width, cfg.hidden, rng, f"backbone.d{d + 1}",
                                         cfg.cross_layers, sizes) for d in range(n_backbones)]
        self.hyper = None
        self.factors: dict[tuple[int, int], LowRankFactors] = {}
        self.norms: dict[tuple[int, int], DomainNormState] = {}
        if cfg.use_adapter:
            self.hyper = HyperNetwork(width, cfg.hyper_dim, cfg.rank, rng)
            for d in range(1, D + 1):
                for p in cfg.sites:
                    prefix = f"adapter.d{d}.s{p}"
                    self.factors[d, p] = LowRankFactors(cfg.rank, cfg.bottleneck, cfg.hidden[p - 1], rng, prefix)
                    self.norms[d, p] = DomainNormState(cfg.hidden[p - 1], prefix, cfg.dn_momentum, cfg.dn_eps,
                                                       cfg.detach_stats)

    def backbone(self, d: int):
        return self.backbones[0 if self.cfg.shared_backbone else d - 1]

    def parameters(self) -> dict[str, Tensor]:
        out = dict(self.embedding.parameters())
        if self.hyper is not None:
            out.update(self.hyper.parameters())
        for key in sorted(self.factors):
            out.update(self.factors[key].parameters())
            out.update(self.norms[key].parameters())
        for bb in self.backbones:
            out.update(bb.parameters())
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for key in sorted(self.norms):
            out.update(self.norms[key].buffers())
        return out

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters().values())

    def input_ids(self, x: np.ndarray, domain: np.ndarray) -> np.ndarray:
        if self.cfg.domain_feature:
            return np.column_stack([x, domain]).astype(np.int64)
        return np.asarray(x, dtype=np.int64)

    def forward_batch(self, batch: Batch, mode: str = "train", use_adapters: bool | None = None) -> Tensor:
        """Click probabilities [B] in batch order."""
        return T.sigmoid(self.logits(batch, mode, use_adapters))

    def logits(self, batch: Batch, mode: str = "train", use_adapters: bool | None = None) -> Tensor:
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode {mode!r}")
        use_adapters = self.cfg.use_adapter if use_adapters is None else use_adapters
        if use_adapters and self.hyper is None:
            raise ValueError("model was built without adapters")
        D = self.spec.num_domains
        if len(batch) and (batch.domain.min() < 1 or batch.domain.max() > D):
            raise DataError(f"batch contains a domain outside 1..{D}")
        ids = self.input_ids(batch.x, batch.domain)
        z = self.embedding(ids)
        outs, order = [], []
        for d in sorted(batch.groups):
            pos = batch.groups[d]
            if len(pos) == 0:
                continue
            zd = T.take_rows(z, pos)
            sites = {}
            if use_adapters:
                I = self.hyper(zd)
                for p in self.cfg.sites:
                    sites[p] = _site_hook(I, self.factors[d, p], self.norms[d, p], mode)
            outs.append(self.backbone(d)(zd, ids[pos], sites))
            order.append(pos)
        stacked = T.concat(outs, axis=0)
        inverse = np.argsort(np.concatenate(order), kind="stable")
        return T.reshape(T.take_rows(stacked, inverse), (len(batch),))


def _site_hook(I, factors, norm, mode):
    return lambda h: adapter_forward_lowrank(h, I, factors, norm, mode)


def bce_loss(pred: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy with predictions clipped to [1e-7, 1 - 1e-7]."""
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != pred.shape:
        raise T.ShapeError(f"bce_loss: predictions {pred.shape} vs labels {y.shape}")
    p = T.clip(pred, CLIP, 1 - CLIP)
    per = T.neg(T.add(T.mul(y, T.log(p)), T.mul(1.0 - y, T.log(T.sub(1.0, p)))))
    return T.reduce_mean(per)
