import numpy as np

from . import tensor as T
from .tensor import Tensor


class EmbeddingTables:
    """One trainable [vocab, e] table per field; the domain indicator is just another field."""

    def __init__(self, names: list[str], vocab_sizes: list[int], dim: int, rng: np.random.Generator):
        self.names = list(names)
        self.dim = dim
        bound = 1.0 / np.sqrt(dim)
        self.tables = [T.parameter(rng.uniform(-bound, bound, size=(n, dim)), name=f"emb.{name}")
                       for name, n in zip(names, vocab_sizes)]

    @property
    def out_dim(self) -> int:
        return len(self.tables) * self.dim

    def parameters(self) -> dict[str, Tensor]:
        return {t.name: t for t in self.tables}

    def __call__(self, ids: np.ndarray) -> Tensor:
        return embed_batch(ids, self.tables, self.names)


def embed_batch(ids: np.ndarray, tables: list[Tensor], names: list[str] | None = None) -> Tensor:
    """[B, F] ids -> [B, F*e], field blocks concatenated in declaration order."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 2 or ids.shape[1] != len(tables):
        raise T.ShapeError(f"expected ids of shape [B, {len(tables)}], got {ids.shape}")
    parts = []
    for j, table in enumerate(tables):
        col = ids[:, j]
        if col.size and (col.min() < 0 or col.max() >= table.shape[0]):
            name = names[j] if names else str(j)
            raise IndexError(f"field {name!r}: id out of range [0, {table.shape[0]})")
        parts.append(T.take_rows(table, col))
    return T.concat(parts, axis=1)
