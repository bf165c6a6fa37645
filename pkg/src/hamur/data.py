"""Dataset specs, canonical CSV ingestion, splitting and mini-batching.

Canonical CSV: UTF-8, header row, columns ``domain``, ``label`` and one
integer column per feature field (raw values; encoded through the field
vocabulary on load, unseen values map to the reserved OOV id 0).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass
class Vocabulary:
    """Raw integer value <-> contiguous id, id 0 reserved for OOV.

    With ``values`` None the field is identity-coded: ids are the raw values
    themselves and anything outside [1, size) falls to 0.
    """

    size: int
    values: list[int] | None = None

    def __post_init__(self):
        if self.values is not None:
            self.size = len(self.values) + 1
            self._index = {v: i + 1 for i, v in enumerate(self.values)}

    def encode(self, raw: int) -> int:
        if self.values is None:
            return raw if 0 < raw < self.size else 0
        return self._index.get(raw, 0)

    def decode(self, idx: int) -> int | None:
        if idx == 0:
            return None
        return idx if self.values is None else self.values[idx - 1]


@dataclass
class FieldSpec:
    name: str
    vocab: Vocabulary


@dataclass
class DatasetSpec:
    fields: list[FieldSpec]
    num_domains: int
    domain_column: str = "domain"
    domain_map: dict[int, int] | None = None  # raw domain value -> 1..D; identity when None
    label_column: str = "label"

    @property
    def field_names(self) -> list[str]:
        return [f.name for f in self.fields]

    @property
    def vocab_sizes(self) -> list[int]:
        return [f.vocab.size for f in self.fields]

    def map_domain(self, raw: int) -> int:
        d = raw if self.domain_map is None else self.domain_map.get(raw)
        if d is None or not 1 <= d <= self.num_domains:
            raise ConfigError(f"domain value {raw!r} is not mapped into [1, {self.num_domains}]")
        return d

    def to_dict(self) -> dict:
        return {
            "num_domains": self.num_domains,
            "domain_column": self.domain_column,
            "domain_map": None if self.domain_map is None else {str(k): v for k, v in self.domain_map.items()},
            "label_column": self.label_column,
            "fields": [{"name": f.name, "size": f.vocab.size, "values": f.vocab.values} for f in self.fields],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        try:
            fields = [FieldSpec(f["name"], Vocabulary(int(f["size"]), f.get("values"))) for f in d["fields"]]
            dm = d.get("domain_map")
            return cls(fields, int(d["num_domains"]), d.get("domain_column", "domain"),
                       None if dm is None else {int(k): int(v) for k, v in dm.items()},
                       d.get("label_column", "label"))
        except (KeyError, TypeError) as e:
            raise ConfigError(f"malformed dataset spec: missing or invalid {e}") from e

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DatasetSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except FileNotFoundError as e:
            raise DataError(f"dataset spec not found: {path}") from e


@dataclass
class Dataset:
    """Column-oriented immutable instance store: ``x[i]`` holds encoded ids in field order."""

    spec: DatasetSpec
    x: np.ndarray        # [N, F] int64
    domain: np.ndarray   # [N] int64 in 1..D
    label: np.ndarray    # [N] float64 in {0, 1}

    def __len__(self):
        return len(self.label)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.spec, self.x[idx], self.domain[idx], self.label[idx])

    def domain_counts(self) -> dict[int, int]:
        return {d: int(np.sum(self.domain == d)) for d in range(1, self.spec.num_domains + 1)}


def load_csv(path, spec: DatasetSpec) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        pos = {name: i for i, name in enumerate(header)}
        needed = [spec.domain_column, spec.label_column] + spec.field_names
        missing = [c for c in needed if c not in pos]
        if missing:
            raise ConfigError(f"{path}: missing column(s) {', '.join(missing)}")
        cols = [pos[c] for c in needed]
        vocabs = [f.vocab for f in spec.fields]
        xs, ds, ys = [], [], []
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                vals = [int(row[c]) for c in cols]
            except (ValueError, IndexError):
                raise DataError(f"{path}: row {rowno}: non-integer or missing value") from None
            d, y = vals[0], vals[1]
            if y not in (0, 1):
                raise DataError(f"{path}: row {rowno}: label {y} is not 0/1")
            ds.append(spec.map_domain(d))
            ys.append(y)
            xs.append([v.encode(r) for v, r in zip(vocabs, vals[2:])])
    F = len(spec.fields)
    return Dataset(spec, np.asarray(xs, dtype=np.int64).reshape(-1, F),
                   np.asarray(ds, dtype=np.int64), np.asarray(ys, dtype=np.float64))


def split(dataset: Dataset, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded random partition, stratified by domain."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios {ratios} do not sum to 1")
    if len(dataset) == 0:
        raise DataError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for d in range(1, dataset.spec.num_domains + 1):
        idx = np.flatnonzero(dataset.domain == d)
        idx = idx[rng.permutation(len(idx))]
        n_valid = int(np.floor(ratios[1] * len(idx) + 0.5))
        n_test = int(np.floor(ratios[2] * len(idx) + 0.5))
        n_train = len(idx) - n_valid - n_test
        parts[0].append(idx[:n_train])
        parts[1].append(idx[n_train:n_train + n_valid])
        parts[2].append(idx[n_train + n_valid:])
    return tuple(dataset.subset(np.sort(np.concatenate(p))) for p in parts)


@dataclass(frozen=True)
class Batch:
    index: np.ndarray        # original dataset rows, batch order
    x: np.ndarray            # [B, F]
    domain: np.ndarray       # [B]
    label: np.ndarray        # [B]
    groups: dict[int, np.ndarray] = field(default_factory=dict)  # domain -> ascending batch positions

    def __len__(self):
        return len(self.label)


def group_by_domain(domain: np.ndarray) -> dict[int, np.ndarray]:
    return {int(d): np.flatnonzero(domain == d) for d in np.unique(domain)}


def make_batch(dataset: Dataset, rows) -> Batch:
    rows = np.asarray(rows, dtype=np.int64)
    dom = dataset.domain[rows]
    return Batch(rows, dataset.x[rows], dom, dataset.label[rows], group_by_domain(dom))


def batches(dataset: Dataset, batch_size: int, seed: int | None = 0, epoch: int = 0) -> Iterator[Batch]:
    """One pass over the data; shuffled by (seed, epoch) unless seed is None."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(dataset)
    order = np.arange(n) if seed is None else np.random.default_rng([seed, epoch]).permutation(n)
    for start in range(0, n, batch_size):
        yield make_batch(dataset, order[start:start + batch_size])


# --- raw dataset preparation ---------------------------------------------

# Ages in ML-1M are coded 1, 18, 25, 35, 45, 50, 56.
MOVIELENS_AGE_DOMAIN = {1: 1, 18: 1, 25: 2, 35: 3, 45: 3, 50: 3, 56: 3}
MOVIELENS_FIELDS = ["user_id", "gender", "age", "occupation", "zip", "zip3", "zip1", "movie_id", "genre"]


def _read_dat(path: Path, ncols: int) -> list[list[str]]:
    if not path.exists():
        raise DataError(f"missing raw file: {path}")
    rows = []
    with path.open(encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("::")
            if len(parts) != ncols:
                raise DataError(f"{path}: line {lineno}: expected {ncols} '::'-separated fields")
            rows.append(parts)
    return rows


def _code(values) -> dict[str, int]:
    return {v: i + 1 for i, v in enumerate(sorted(set(values)))}


def prepare_movielens(raw_dir, out_csv, positive_threshold: int = 4) -> DatasetSpec:
    """ML-1M ``ratings.dat``/``users.dat``/``movies.dat`` -> canonical CSV + spec sidecar.

    Seven user fields (id, gender, age, occupation, zip, 3- and 1-digit zip
    prefixes) and two item fields (id, first listed genre). Label is
    ``rating >= positive_threshold``; domain follows the age bucket map.
    """
    raw_dir = Path(raw_dir)
    users = _read_dat(raw_dir / "users.dat", 5)
    movies = _read_dat(raw_dir / "movies.dat", 3)
    ratings = _read_dat(raw_dir / "ratings.dat", 4)
    gender_code = _code(u[1] for u in users)
    zip_code = _code(u[4] for u in users)
    zip3_code = _code(u[4][:3] for u in users)
    zip1_code = _code(u[4][:1] for u in users)
    genre_code = _code(m[2].split("|")[0] for m in movies)
    try:
        user_row = {int(u[0]): [int(u[0]), gender_code[u[1]], int(u[2]), int(u[3]), zip_code[u[4]],
                                zip3_code[u[4][:3]], zip1_code[u[4][:1]]] for u in users}
        movie_row = {int(m[0]): [int(m[0]), genre_code[m[2].split("|")[0]]] for m in movies}
    except ValueError as e:
        raise DataError(f"malformed raw MovieLens value: {e}") from e

    out_rows = []
    for r in ratings:
        try:
            uid, mid, rating = int(r[0]), int(r[1]), int(r[2])
        except ValueError as e:
            raise DataError(f"malformed rating row {r!r}") from e
        if uid not in user_row or mid not in movie_row:
            raise DataError(f"rating references unknown user {uid} or movie {mid}")
        u = user_row[uid]
        dom = MOVIELENS_AGE_DOMAIN.get(u[2])
        if dom is None:
            raise DataError(f"user {uid} has unrecognised age code {u[2]}")
        out_rows.append([dom, int(rating >= positive_threshold)] + u + movie_row[mid])

    columns = list(zip(*(row[2:] for row in out_rows))) if out_rows else [()] * len(MOVIELENS_FIELDS)
    fields = [FieldSpec(name, Vocabulary(0, sorted(set(col)))) for name, col in zip(MOVIELENS_FIELDS, columns)]
    spec = DatasetSpec(fields, num_domains=3)
    _write_csv(out_csv, spec, out_rows)
    return spec


def synthetic_rows(n: int, num_domains: int, seed: int, num_fields: int = 4, vocab: int = 10,
                   label_noise: float = 0.0) -> np.ndarray:
    """Domain-flipped rule: label = (x_1 odd) XOR (domain odd); other fields are noise."""
    rng = np.random.default_rng(seed)
    dom = rng.integers(1, num_domains + 1, size=n)
    x = rng.integers(1, vocab + 1, size=(n, num_fields))
    y = (x[:, 0] % 2) ^ (dom % 2)
    if label_noise > 0:
        flip = rng.random(n) < label_noise
        y = np.where(flip, 1 - y, y)
    return np.column_stack([dom, y, x]).astype(np.int64)


def prepare_synthetic(out_csv, n: int = 10_000, num_domains: int = 3, seed: int = 0,
                      num_fields: int = 4, vocab: int = 10, label_noise: float = 0.0) -> DatasetSpec:
    rows = synthetic_rows(n, num_domains, seed, num_fields, vocab, label_noise)
    spec = DatasetSpec([FieldSpec(f"f{i + 1}", Vocabulary(vocab + 1)) for i in range(num_fields)], num_domains)
    _write_csv(out_csv, spec, rows.tolist())
    return spec


def _write_csv(out_csv, spec: DatasetSpec, rows) -> None:
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    with out_csv.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([spec.domain_column, spec.label_column] + spec.field_names)
        w.writerows(rows)
    spec.save(sidecar_path(out_csv))


def sidecar_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".spec.json")
