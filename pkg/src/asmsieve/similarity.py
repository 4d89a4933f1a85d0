"""Token-set flattening, Jaccard overlap, cosine, and the hybrid combiner.

Flattening turns a feature document into a set of text tokens:

  * scalar / boolean / enum fields: ``field=value``
  * set-like arrays (``int_consts``, ``float_consts``,
    ``dominant_operation_categories``): ``field~element``
  * positional arrays (``in_param_types``, extension arrays): ``field~i:element``
    so that argument order still matters under set semantics
  * extension scalars/objects: ``name=<compact JSON>``

Two valid full documents flatten to equal token sets exactly when their
canonical texts are equal. Optional log-bucketing coarsens the four count
fields for robustness experiments; it is off by default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import SchemaError
from .schema import FIELD_BY_NAME, FIELD_ORDER, FeatureSet, _sorted_json

BUCKETED_FIELDS = ("in_param_cnt", "imm_values_cnt", "subcall_targets", "interrupts_syscalls")

_POSITIONAL_ARRAYS = {"in_param_types"}


@dataclass(frozen=True)
class FlattenConfig:
    """Knobs for token generation. ``bucket_counts`` swaps exact count tokens
    for log buckets; ``atomic_arrays`` emits one token per array instead of
    one per element."""

    bucket_counts: bool = False
    atomic_arrays: bool = False


@dataclass(frozen=True)
class TokenSet:
    tokens: frozenset[str]
    source: str = ""

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class HybridScore:
    s_a: float
    s_e: float
    S: float


def count_bucket(n: int) -> str:
    """Log bucket label: 0, 1, 2, 3-4, 5-8, 9-16, ..."""
    if n < 0:
        raise ValueError(f"count must be >= 0, got {n}")
    if n <= 2:
        return str(n)
    low = 2
    while low * 2 < n:
        low *= 2
    return f"{low + 1}-{low * 2}"


def _scalar_token(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    return str(value)


def _extension_value(value: Any) -> str:
    return json.dumps(_sorted_json(value), separators=(",", ":"))


def flatten(fs: FeatureSet, config: FlattenConfig | None = None, source: str = "") -> TokenSet:
    """Flatten a feature document into its field-value token set."""
    cfg = config or FlattenConfig()
    tokens: set[str] = set()
    for name in FIELD_ORDER:
        if name not in fs.fields:
            continue
        value = fs.fields[name]
        spec = FIELD_BY_NAME[name]
        if isinstance(value, tuple):
            if cfg.atomic_arrays:
                tokens.add(f"{name}={json.dumps(list(value), separators=(',', ':'))}")
            elif name in _POSITIONAL_ARRAYS:
                tokens.update(f"{name}~{i}:{v}" for i, v in enumerate(value))
            else:
                tokens.update(f"{name}~{v}" for v in value)
        elif cfg.bucket_counts and name in BUCKETED_FIELDS:
            tokens.add(f"{name}=bucket:{count_bucket(value)}")
        elif spec.kind == "count":
            tokens.add(f"{name}={value}")
        else:
            tokens.add(f"{name}={_scalar_token(value)}")
    for key in sorted(fs.extensions):
        value = fs.extensions[key]
        if isinstance(value, list):
            if cfg.atomic_arrays:
                tokens.add(f"{key}={_extension_value(value)}")
            else:
                tokens.update(f"{key}~{i}:{_extension_value(v)}" for i, v in enumerate(value))
        else:
            tokens.add(f"{key}={_extension_value(value)}")
    return TokenSet(tokens=frozenset(tokens), source=source)


def _as_token_frozenset(x: TokenSet | Iterable[str]) -> frozenset[str]:
    if isinstance(x, TokenSet):
        return x.tokens
    return frozenset(x)


def jaccard(a: TokenSet | Iterable[str], b: TokenSet | Iterable[str]) -> float:
    """|A ∩ B| / |A ∪ B|; defined as 1.0 when both sets are empty."""
    sa, sb = _as_token_frozenset(a), _as_token_frozenset(b)
    union = len(sa | sb)
    if union == 0:
        return 1.0
    return len(sa & sb) / union


@dataclass(eq=False)
class EmbeddingVector:
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.shape[0] == 0:
            raise ValueError("embedding must be a non-empty 1-D vector")

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def _as_vector(v: EmbeddingVector | Iterable[float]) -> np.ndarray:
    if isinstance(v, EmbeddingVector):
        return v.values
    arr = np.asarray(list(v) if not isinstance(v, np.ndarray) else v, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] == 0:
        raise ValueError("embedding must be a non-empty 1-D vector")
    return arr


def cosine(u: EmbeddingVector | Iterable[float], v: EmbeddingVector | Iterable[float]) -> float:
    au, av = _as_vector(u), _as_vector(v)
    if au.shape[0] != av.shape[0]:
        raise ValueError(f"embedding dimensions differ: {au.shape[0]} vs {av.shape[0]}")
    nu = float(np.linalg.norm(au))
    nv = float(np.linalg.norm(av))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.dot(au, av) / (nu * nv))


def hybrid(s_a: float, s_e: float) -> HybridScore:
    """Equal-weight combination of token overlap and embedding similarity."""
    if not 0.0 <= s_a <= 1.0:
        raise ValueError(f"s_a must lie in [0, 1], got {s_a}")
    if not -1.0 <= s_e <= 1.0:
        raise ValueError(f"s_e must lie in [-1, 1], got {s_e}")
    return HybridScore(s_a=s_a, s_e=s_e, S=(s_e + s_a) / 2)


class EmbeddingStore:
    """Embeddings keyed by function id, all sharing one dimension."""

    def __init__(self) -> None:
        self._vectors: dict[str, EmbeddingVector] = {}
        self._dim: int | None = None

    def add(self, fid: str, values: Iterable[float]) -> None:
        vec = EmbeddingVector(np.asarray(list(values), dtype=np.float64))
        if not np.any(vec.values):
            raise ValueError(f"embedding for {fid!r} is all-zero")
        if self._dim is None:
            self._dim = vec.dim
        elif vec.dim != self._dim:
            raise ValueError(
                f"embedding for {fid!r} has dim {vec.dim}, store uses {self._dim}"
            )
        self._vectors[fid] = vec

    def __contains__(self, fid: str) -> bool:
        return fid in self._vectors

    def __getitem__(self, fid: str) -> EmbeddingVector:
        return self._vectors[fid]

    def __len__(self) -> int:
        return len(self._vectors)

    @property
    def dim(self) -> int | None:
        return self._dim

    def ids(self) -> list[str]:
        return list(self._vectors)


def load_embeddings(path) -> EmbeddingStore:
    """Read a JSON-lines embedding file: ``{"id": ..., "values": [...]}``."""
    store = EmbeddingStore()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            if not isinstance(obj, Mapping) or "id" not in obj or "values" not in obj:
                raise SchemaError(f"{path}:{line_no}: expected keys 'id' and 'values'")
            try:
                store.add(obj["id"], obj["values"])
            except ValueError as exc:
                raise SchemaError(f"{path}:{line_no}: {exc}") from exc
    return store


def save_embeddings(path, vectors: Mapping[str, Iterable[float]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for fid, values in vectors.items():
            fh.write(
                json.dumps({"id": fid, "values": [float(v) for v in values]},
                           separators=(",", ":"))
                + "\n"
            )
