"""Domain-shared hyper-network and low-rank adapter weight generation."""
import numpy as np

from . import tensor as T
from .tensor import Tensor


class HyperNetwork:
    """z [B, in] -> ReLU hidden [B, m] -> k*k values, reshaped row-major to [B, k, k].

    A single instance serves every domain.
    """

    def __init__(self, in_dim: int, hidden: int, rank: int, rng: np.random.Generator):
        self.in_dim, self.hidden, self.rank = in_dim, hidden, rank
        b1, b2 = 1.0 / np.sqrt(in_dim), 1.0 / np.sqrt(hidden)
        self.w1 = T.parameter(rng.uniform(-b1, b1, size=(in_dim, hidden)), name="hyper.w1")
        self.b1 = T.parameter(np.zeros(hidden), name="hyper.b1")
        self.w2 = T.parameter(rng.uniform(-b2, b2, size=(hidden, rank * rank)), name="hyper.w2")
        self.b2 = T.parameter(np.zeros(rank * rank), name="hyper.b2")

    def parameters(self) -> dict[str, Tensor]:
        return {p.name: p for p in (self.w1, self.b1, self.w2, self.b2)}

    def __call__(self, z: Tensor) -> Tensor:
        return represent(z, self.w1, self.b1, self.w2, self.b2, self.rank)


def represent(z: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor, rank: int) -> Tensor:
    if z.ndim != 2 or z.shape[1] != w1.shape[0]:
        raise T.ShapeError(f"hyper-network expects [B, {w1.shape[0]}] input, got {z.shape}")
    h = T.relu(T.add(T.matmul(z, w1), b1))
    h = T.add(T.matmul(h, w2), b2)
    return T.reshape(h, (z.shape[0], rank, rank))


class LowRankFactors:
    """Per (domain, site) factors: U = Wul I Wur is [s, h], V = Wvl I Wvr is [h, s]."""

    def __init__(self, rank: int, bottleneck: int, width: int, rng: np.random.Generator, prefix: str):
        k, s, h = rank, bottleneck, width
        bound = 1.0 / np.sqrt(k)
        u = lambda *shape: rng.uniform(-bound, bound, size=shape)  # noqa: E731
        self.ul = T.parameter(u(s, k), name=f"{prefix}.ul")
        self.ur = T.parameter(u(k, h), name=f"{prefix}.ur")
        self.vl = T.parameter(u(h, k), name=f"{prefix}.vl")
        self.vr = T.parameter(u(k, s), name=f"{prefix}.vr")

    def parameters(self) -> dict[str, Tensor]:
        return {p.name: p for p in (self.ul, self.ur, self.vl, self.vr)}


def generate_adapter_weights(I: Tensor, f: LowRankFactors) -> tuple[Tensor, Tensor]:
    """Materialise per-instance U [B, s, h] and V [B, h, s]."""
    k = f.ul.shape[1]
    if I.ndim != 3 or I.shape[1:] != (k, k) or f.vr.shape[0] != k or f.ur.shape[0] != k \
            or f.vl.shape[1] != k or f.vl.shape[0] != f.ur.shape[1] or f.vr.shape[1] != f.ul.shape[0]:
        raise T.ShapeError(f"factor shapes {f.ul.shape}, {f.ur.shape}, {f.vl.shape}, {f.vr.shape} "
                           f"inconsistent with representation {I.shape}")
    U = T.matmul(T.matmul(f.ul, I), f.ur)
    V = T.matmul(T.matmul(f.vl, I), f.vr)
    return U, V


def lowrank_apply(I: Tensor, left: Tensor, right: Tensor, x: Tensor) -> Tensor:
    """Row-wise ``(left @ I_i @ right) @ x_i`` without forming the product matrix.

    x [B, n] -> [B, m] for left [m, k], right [k, n].
    """
    a = T.matmul(x, T.transpose(right))                                  # [B, k]
    b = T.reshape(T.matmul(I, T.reshape(a, (a.shape[0], a.shape[1], 1))), a.shape)
    return T.matmul(b, T.transpose(left))                                # [B, m]
