"""Per-domain base networks with hook points for adapter insertion.

``sites`` maps a deep-tower position p to a callable applied to the hidden
state right after hidden layer p (1-based), i.e. between layers p and p+1.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import tensor as T
from .tensor import Tensor

Hook = Callable[[Tensor], Tensor]
KINDS = ("mlp", "dcn", "wide_deep")


class Linear:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str):
        bound = 1.0 / np.sqrt(n_in)
        self.w = T.parameter(rng.uniform(-bound, bound, size=(n_in, n_out)), name=f"{name}.w")
        self.b = T.parameter(np.zeros(n_out), name=f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return T.add(T.matmul(x, self.w), self.b)

    def parameters(self):
        return {self.w.name: self.w, self.b.name: self.b}


class DeepTower:
    """Affine+ReLU stack; returns the last hidden state (no output layer)."""

    def __init__(self, n_in: int, hidden: list[int], rng, name: str):
        dims = [n_in] + list(hidden)
        self.layers = [Linear(a, b, rng, f"{name}.l{i + 1}") for i, (a, b) in enumerate(zip(dims, dims[1:]))]

    def __call__(self, x: Tensor, sites: dict[int, Hook] | None = None) -> Tensor:
        sites = sites or {}
        bad = [p for p in sites if not 1 <= p <= len(self.layers)]
        if bad:
            raise IndexError(f"adapter site(s) {bad} outside deep tower positions 1..{len(self.layers)}")
        h = x
        for i, layer in enumerate(self.layers, start=1):
            h = T.relu(layer(h))
            if i in sites:
                h = sites[i](h)
        return h

    def parameters(self):
        out = {}
        for layer in self.layers:
            out.update(layer.parameters())
        return out


class MLP:
    def __init__(self, n_in: int, hidden: list[int], rng, name: str):
        self.tower = DeepTower(n_in, hidden, rng, f"{name}.deep")
        self.out = Linear(hidden[-1], 1, rng, f"{name}.out")

    def __call__(self, x: Tensor, ids: np.ndarray, sites=None) -> Tensor:
        return self.out(self.tower(x, sites))

    def parameters(self):
        return {**self.tower.parameters(), **self.out.parameters()}


class DCN:
    """Cross network and deep tower in parallel over the shared input, concatenated into one logit."""

    def __init__(self, n_in: int, hidden: list[int], cross_layers: int, rng, name: str):
        bound = 1.0 / np.sqrt(n_in)
        self.cross_w = [T.parameter(rng.uniform(-bound, bound, size=(n_in, 1)), name=f"{name}.cross{i + 1}.w")
                        for i in range(cross_layers)]
        self.cross_b = [T.parameter(np.zeros(n_in), name=f"{name}.cross{i + 1}.b") for i in range(cross_layers)]
        self.tower = DeepTower(n_in, hidden, rng, f"{name}.deep")
        self.out = Linear(n_in + hidden[-1], 1, rng, f"{name}.out")

    def cross(self, x0: Tensor) -> Tensor:
        x = x0
        for w, b in zip(self.cross_w, self.cross_b):
            x = T.add(T.add(T.mul(x0, T.matmul(x, w)), b), x)
        return x

    def __call__(self, x: Tensor, ids: np.ndarray, sites=None) -> Tensor:
        return self.out(T.concat([self.cross(x), self.tower(x, sites)], axis=1))

    def parameters(self):
        out = {p.name: p for p in self.cross_w + self.cross_b}
        out.update(self.tower.parameters())
        out.update(self.out.parameters())
        return out


class WideDeep:
    """Wide linear part over raw one-hot fields plus an MLP over embeddings; logits summed."""

    def __init__(self, n_in: int, hidden: list[int], vocab_sizes: list[int], rng, name: str):
        self.wide = [T.parameter(np.zeros((n, 1)), name=f"{name}.wide{j}") for j, n in enumerate(vocab_sizes)]
        self.wide_b = T.parameter(np.zeros(1), name=f"{name}.wide.b")
        self.deep = MLP(n_in, hidden, rng, name)

    def wide_logit(self, ids: np.ndarray) -> Tensor:
        out = self.wide_b
        for j, table in enumerate(self.wide):
            out = T.add(out, T.take_rows(table, ids[:, j]))
        return out

    def __call__(self, x: Tensor, ids: np.ndarray, sites=None) -> Tensor:
        return T.add(self.wide_logit(ids), self.deep(x, ids, sites))

    def parameters(self):
        out = {p.name: p for p in self.wide + [self.wide_b]}
        out.update(self.deep.parameters())
        return out


def build_backbone(kind: str, n_in: int, hidden: list[int], rng, name: str, cross_layers: int = 2,
                   vocab_sizes: list[int] | None = None):
    if kind == "mlp":
        return MLP(n_in, hidden, rng, name)
    if kind == "dcn":
        return DCN(n_in, hidden, cross_layers, rng, name)
    if kind == "wide_deep":
        return WideDeep(n_in, hidden, vocab_sizes or [], rng, name)
    raise ValueError(f"unknown backbone kind {kind!r}; expected one of {KINDS}")
