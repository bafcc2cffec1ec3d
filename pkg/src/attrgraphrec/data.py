"""Rating and attribute ingestion, multi-hot encodings, and train/test splits.

Ratings arrive as delimited text (user, item, rating[, timestamp] per
line); node ids are densely re-indexed in order of first appearance and
the original ids kept for joining attribute files.  Attributes become
per-node multi-hot rows over an :class:`AttributeSchema` whose fields own
disjoint, contiguous slot ranges.

Split protocol: the warm split partitions interactions uniformly at
random; the cold splits pick a fraction of the nodes (floor rounding) and
move *all* of their interactions to the test set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .seeding import rng_for

__all__ = [
    "DataError",
    "RatingSet",
    "FieldSpec",
    "AttributeSchema",
    "MultiHotMatrix",
    "Split",
    "load_ratings",
    "save_ratings",
    "build_attribute_encoding",
    "load_attribute_table",
    "split_warm",
    "split_cold_start",
    "save_split",
    "load_split",
    "bucket_labels",
    "bucket_label",
]

WARM = "warm"
ITEM_COLD = "item-cold"
USER_COLD = "user-cold"
SPLIT_MODES = (WARM, ITEM_COLD, USER_COLD)


class DataError(ValueError):
    """Malformed input file or inconsistent request."""


# ----------------------------------------------------------------------
# ratings
# ----------------------------------------------------------------------

@dataclass
class RatingSet:
    """Rating triples over densely indexed users and items.

    ``user_ids[u]`` is the original id string of dense user index ``u``
    (same for items), so attribute files keyed by original id can be
    joined later.
    """

    num_users: int
    num_items: int
    triples: list  # (user index, item index, rating) with float rating
    user_ids: tuple
    item_ids: tuple

    @property
    def mean_rating(self) -> float:
        if not self.triples:
            raise DataError("empty rating set has no mean")
        return float(np.mean([r for _, _, r in self.triples]))

    @property
    def sparsity(self) -> float:
        return 1.0 - len(self.triples) / (self.num_users * self.num_items)

    @property
    def rating_range(self):
        values = [r for _, _, r in self.triples]
        return (min(values), max(values))

    def user_index(self) -> dict:
        return {orig: u for u, orig in enumerate(self.user_ids)}

    def item_index(self) -> dict:
        return {orig: i for i, orig in enumerate(self.item_ids)}


def load_ratings(path, delimiter="\t") -> RatingSet:
    """Parse a delimited rating file into a densely indexed RatingSet.

    Rejects malformed lines and duplicate (user, item) pairs, naming the
    offending line number.  A trailing timestamp column is ignored.
    """
    users: dict = {}
    items: dict = {}
    triples = []
    seen_pairs = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split(delimiter)
            if len(parts) < 3:
                raise DataError(f"{path}:{lineno}: expected user{delimiter}item{delimiter}rating, got {line!r}")
            uo, io, rs = parts[0], parts[1], parts[2]
            try:
                r = float(rs)
            except ValueError:
                raise DataError(f"{path}:{lineno}: rating {rs!r} is not a number") from None
            if not math.isfinite(r):
                raise DataError(f"{path}:{lineno}: rating {rs!r} is not finite")
            u = users.setdefault(uo, len(users))
            i = items.setdefault(io, len(items))
            if (u, i) in seen_pairs:
                raise DataError(f"{path}:{lineno}: duplicate rating for pair ({uo}, {io})")
            seen_pairs.add((u, i))
            triples.append((u, i, r))
    if not triples:
        raise DataError(f"{path}: no ratings found")
    return RatingSet(
        num_users=len(users),
        num_items=len(items),
        triples=triples,
        user_ids=tuple(users),
        item_ids=tuple(items),
    )


def save_ratings(ratings: RatingSet, path, delimiter="\t") -> None:
    """Write triples back out with original ids; reloading round-trips."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, i, r in ratings.triples:
            fh.write(f"{ratings.user_ids[u]}{delimiter}{ratings.item_ids[i]}{delimiter}{r!r}\n")


# ----------------------------------------------------------------------
# attribute schema and multi-hot encoding
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class FieldSpec:
    """One attribute field: an ordered vocabulary mapped to a slot block."""

    name: str
    values: tuple
    offset: int
    has_unknown: bool = False

    @property
    def width(self) -> int:
        return len(self.values) + (1 if self.has_unknown else 0)

    @property
    def unknown_slot(self):
        return self.offset + len(self.values) if self.has_unknown else None

    def slot(self, value) -> int:
        """Global slot index for ``value``; unknown values go to the
        UNKNOWN slot when the field has one."""
        try:
            return self.offset + self.values.index(value)
        except ValueError:
            if self.has_unknown:
                return self.unknown_slot
            raise DataError(f"field {self.name!r}: unknown value {value!r}") from None


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered fields with disjoint contiguous slot ranges; width K."""

    fields: tuple

    @classmethod
    def from_fields(cls, specs) -> "AttributeSchema":
        """Build from (name, values) or (name, values, has_unknown) tuples."""
        out = []
        offset = 0
        for spec in specs:
            name, values = spec[0], tuple(spec[1])
            has_unknown = bool(spec[2]) if len(spec) > 2 else False
            fs = FieldSpec(name=name, values=values, offset=offset, has_unknown=has_unknown)
            out.append(fs)
            offset += fs.width
        return cls(fields=tuple(out))

    @property
    def width(self) -> int:
        return sum(f.width for f in self.fields)

    def field(self, name: str) -> FieldSpec:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(name)


@dataclass
class MultiHotMatrix:
    """Per-node multi-hot attribute rows of width ``schema.width``."""

    rows: np.ndarray
    schema: AttributeSchema

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[1] != self.schema.width:
            raise DataError(
                f"attribute rows have width {self.rows.shape}, schema width {self.schema.width}"
            )


def build_attribute_encoding(records, schema: AttributeSchema, num_nodes: int) -> MultiHotMatrix:
    """Encode ``records`` = iterable of (node index, {field: value or values}).

    Categorical fields take a single value (one slot); list values set one
    slot per entry.  Unlisted nodes get all-zero rows.
    """
    rows = np.zeros((num_nodes, schema.width))
    for node, fields in records:
        if not (0 <= node < num_nodes):
            raise DataError(f"attribute record for unknown node id {node}")
        for name, value in fields.items():
            fs = schema.field(name)
            if isinstance(value, set):
                values = sorted(value, key=str)
            elif isinstance(value, (list, tuple)):
                values = list(value)
            else:
                values = [value]
            for v in values:
                rows[node, fs.slot(v)] = 1.0
    return MultiHotMatrix(rows=rows, schema=schema)


# ----------------------------------------------------------------------
# schema-config driven attribute files
# ----------------------------------------------------------------------

def bucket_labels(edges) -> tuple:
    """Slot labels for a numeric field bucketed at ``edges``."""
    labels = [f"<{edges[0]}"]
    labels += [f"{lo}-{hi}" for lo, hi in zip(edges[:-1], edges[1:])]
    labels.append(f">={edges[-1]}")
    return tuple(labels)


def bucket_label(value: float, edges) -> str:
    labels = bucket_labels(edges)
    for k, edge in enumerate(edges):
        if value < edge:
            return labels[k]
    return labels[len(edges)]


def load_attribute_table(path, schema_config: dict, id_map: dict, num_nodes: int):
    """Read a delimited attribute file through a schema config.

    ``schema_config`` keys: ``delimiter``, ``id_column``, and ``fields``,
    a list of dicts with ``name`` and ``kind`` in {categorical, multi,
    bucket, flags}.  Vocabularies for categorical/multi fields are taken
    from ``values`` when given, otherwise collected from the file (sorted
    for determinism); both get an UNKNOWN slot for out-of-vocabulary or
    blank entries.  Returns (MultiHotMatrix, AttributeSchema).
    """
    delim = schema_config.get("delimiter", "|")
    id_col = int(schema_config.get("id_column", 0))
    fields_cfg = schema_config["fields"]

    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n").rstrip("\r") for ln in fh]
    parsed = []
    for lineno, line in enumerate(lines, start=1):
        if not line:
            continue
        parts = line.split(delim)
        if len(parts) <= id_col:
            raise DataError(f"{path}:{lineno}: missing id column {id_col}")
        orig = parts[id_col]
        if orig not in id_map:
            raise DataError(f"{path}:{lineno}: attribute record for unknown node id {orig!r}")
        parsed.append((lineno, id_map[orig], parts))

    def cell(parts, col, lineno):
        if col >= len(parts):
            raise DataError(f"{path}:{lineno}: missing column {col}")
        return parts[col].strip()

    # pass 1: vocabularies
    specs = []
    for cfg in fields_cfg:
        name, kind = cfg["name"], cfg["kind"]
        if kind == "flags":
            specs.append((name, tuple(cfg["labels"]), False))
        elif kind == "bucket":
            specs.append((name, bucket_labels(cfg["edges"]), True))
        elif kind in ("categorical", "multi"):
            if cfg.get("values") is not None:
                vocab = tuple(cfg["values"])
            else:
                seen = set()
                for lineno, _, parts in parsed:
                    raw = cell(parts, int(cfg["column"]), lineno)
                    if kind == "multi":
                        seen.update(v for v in raw.split(cfg.get("separator", ",")) if v)
                    elif raw:
                        seen.add(raw)
                vocab = tuple(sorted(seen))
            specs.append((name, vocab, True))
        else:
            raise DataError(f"schema field {name!r}: unknown kind {kind!r}")
    schema = AttributeSchema.from_fields(specs)

    # pass 2: encode
    rows = np.zeros((num_nodes, schema.width))
    for lineno, node, parts in parsed:
        for cfg in fields_cfg:
            fs = schema.field(cfg["name"])
            kind = cfg["kind"]
            if kind == "flags":
                start = int(cfg["start_column"])
                for k in range(len(cfg["labels"])):
                    raw = cell(parts, start + k, lineno)
                    if raw not in ("0", "1"):
                        raise DataError(f"{path}:{lineno}: flag column {start + k} is {raw!r}, want 0/1")
                    if raw == "1":
                        rows[node, fs.offset + k] = 1.0
            elif kind == "bucket":
                raw = cell(parts, int(cfg["column"]), lineno)
                if raw == "":
                    rows[node, fs.unknown_slot] = 1.0
                else:
                    try:
                        value = float(raw)
                    except ValueError:
                        raise DataError(f"{path}:{lineno}: bucket field {fs.name!r} got {raw!r}") from None
                    rows[node, fs.slot(bucket_label(value, cfg["edges"]))] = 1.0
            elif kind == "categorical":
                raw = cell(parts, int(cfg["column"]), lineno)
                rows[node, fs.slot(raw) if raw else fs.unknown_slot] = 1.0
            else:  # multi
                raw = cell(parts, int(cfg["column"]), lineno)
                values = [v for v in raw.split(cfg.get("separator", ",")) if v]
                if not values:
                    rows[node, fs.unknown_slot] = 1.0
                for v in values:
                    rows[node, fs.slot(v)] = 1.0
    return MultiHotMatrix(rows=rows, schema=schema), schema


# ----------------------------------------------------------------------
# splits
# ----------------------------------------------------------------------

@dataclass
class Split:
    """Train/test partition with cold-node bookkeeping."""

    mode: str
    fraction: float
    seed: int
    train: list
    test: list
    cold_ids: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.mode not in SPLIT_MODES:
            raise DataError(f"unknown split mode {self.mode!r}")


def split_warm(ratings: RatingSet, fraction: float, seed: int) -> Split:
    """Partition interactions uniformly at random; no cold nodes."""
    if not (0.0 < fraction < 1.0):
        raise DataError(f"warm split fraction must be in (0, 1), got {fraction}")
    n = len(ratings.triples)
    n_test = math.floor(fraction * n)
    rng = rng_for(seed, "split-warm")
    test_idx = set(rng.permutation(n)[:n_test].tolist())
    train = [t for k, t in enumerate(ratings.triples) if k not in test_idx]
    test = [t for k, t in enumerate(ratings.triples) if k in test_idx]
    if not train:
        raise DataError("warm split left no training triples")
    return Split(mode=WARM, fraction=fraction, seed=seed, train=train, test=test)


def split_cold_start(ratings: RatingSet, fraction: float, mode: str, seed: int) -> Split:
    """Mark floor(fraction * node count) nodes cold and move all of their
    interactions to the test set."""
    if mode not in (ITEM_COLD, USER_COLD):
        raise DataError(f"cold split mode must be {ITEM_COLD!r} or {USER_COLD!r}, got {mode!r}")
    if not (0.0 <= fraction < 1.0):
        raise DataError(f"cold split fraction must be in [0, 1), got {fraction}")
    count = ratings.num_items if mode == ITEM_COLD else ratings.num_users
    n_cold = math.floor(fraction * count)
    rng = rng_for(seed, "split-cold", mode)
    cold = frozenset(rng.permutation(count)[:n_cold].tolist())
    key = (lambda t: t[1]) if mode == ITEM_COLD else (lambda t: t[0])
    train = [t for t in ratings.triples if key(t) not in cold]
    test = [t for t in ratings.triples if key(t) in cold]
    if not train:
        raise DataError("cold split left no training triples")
    return Split(
        mode=mode,
        fraction=fraction,
        seed=seed,
        train=train,
        test=test,
        cold_ids=tuple(sorted(cold)),
    )


def _triples_jsonable(triples):
    return [[int(u), int(i), float(r)] for u, i, r in triples]


def save_split(split: Split, path) -> None:
    doc = {
        "mode": split.mode,
        "fraction": split.fraction,
        "seed": split.seed,
        "cold_ids": [int(c) for c in split.cold_ids],
        "train": _triples_jsonable(split.train),
        "test": _triples_jsonable(split.test),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_split(path) -> Split:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return Split(
        mode=doc["mode"],
        fraction=doc["fraction"],
        seed=doc["seed"],
        train=[(u, i, r) for u, i, r in doc["train"]],
        test=[(u, i, r) for u, i, r in doc["test"]],
        cold_ids=tuple(doc["cold_ids"]),
    )
