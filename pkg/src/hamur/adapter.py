"""Bottleneck adapter cell with per-domain normalisation and residual connection."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .hyper import LowRankFactors, lowrank_apply
from .tensor import Tensor


class DomainNormState:
    """Scale/shift plus running statistics for one (domain, site)."""

    def __init__(self, width: int, prefix: str, momentum: float = 0.9, eps: float = 1e-5,
                 detach_stats: bool = False):
        self.gamma = T.parameter(np.ones(width), name=f"{prefix}.gamma")
        self.beta = T.parameter(np.zeros(width), name=f"{prefix}.beta")
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)
        self.momentum = momentum
        self.eps = eps
        self.detach_stats = detach_stats
        self.prefix = prefix

    def parameters(self) -> dict[str, Tensor]:
        return {self.gamma.name: self.gamma, self.beta.name: self.beta}

    def buffers(self) -> dict[str, np.ndarray]:
        return {f"{self.prefix}.running_mean": self.running_mean,
                f"{self.prefix}.running_var": self.running_var}


def domain_norm(x: Tensor, state: DomainNormState, mode: str = "train") -> Tensor:
    if mode == "train":
        if x.shape[0] == 0:
            return x
        mean, var = T.batch_stats(x)
        rho = state.momentum
        state.running_mean[...] = rho * state.running_mean + (1 - rho) * mean.data
        state.running_var[...] = rho * state.running_var + (1 - rho) * var.data
        if state.detach_stats:
            mean, var = mean.detach(), var.detach()
    elif mode == "eval":
        mean, var = Tensor(state.running_mean), Tensor(state.running_var)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    xhat = T.mul(T.sub(x, mean), T.power(T.add(var, state.eps), -0.5))
    return T.add(T.mul(state.gamma, xhat), state.beta)


def adapter_forward(x: Tensor, U: Tensor, V: Tensor, state: DomainNormState, mode: str = "train") -> Tensor:
    """y_i = DN(V_i sigmoid(U_i x_i)) + x_i with explicit per-instance U [b, s, h], V [b, h, s]."""
    b, h = x.shape
    if U.ndim != 3 or V.ndim != 3 or U.shape[0] != b or V.shape[0] != b or U.shape[2] != h or V.shape[1] != h \
            or U.shape[1] != V.shape[2]:
        raise T.ShapeError(f"adapter: x {x.shape} does not align with U {U.shape} / V {V.shape}")
    col = T.reshape(x, (b, h, 1))
    down = T.sigmoid(T.matmul(U, col))                     # [b, s, 1]
    up = T.reshape(T.matmul(V, down), (b, h))
    return T.add(domain_norm(up, state, mode), x)


def adapter_forward_lowrank(x: Tensor, I: Tensor, factors: LowRankFactors, state: DomainNormState,
                            mode: str = "train") -> Tensor:
    """Same map as ``adapter_forward`` with U, V kept in factored form."""
    if I.shape[0] != x.shape[0] or factors.ur.shape[1] != x.shape[1]:
        raise T.ShapeError(f"adapter: x {x.shape} does not align with representation {I.shape} "
                           f"and factor width {factors.ur.shape[1]}")
    down = T.sigmoid(lowrank_apply(I, factors.ul, factors.ur, x))
    up = lowrank_apply(I, factors.vl, factors.vr, down)
    return T.add(domain_norm(up, state, mode), x)
