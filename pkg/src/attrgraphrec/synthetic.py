"""Synthetic rating datasets with attribute-correlated preferences.

The generator plants low-rank structure (user and item factors plus
biases) and derives every attribute from the same factors with noise, so
attribute-based neighborhoods and cold-start preference synthesis have
real signal to recover.  Ratings are integer stars on a 1..5 scale.

Used by the test suite and the demos; real datasets in the same file
formats drop in through the ordinary loaders.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .data import (
    AttributeSchema,
    MultiHotMatrix,
    RatingSet,
    build_attribute_encoding,
    bucket_label,
    bucket_labels,
)
from .seeding import rng_for

__all__ = ["SyntheticData", "make_dataset", "write_dataset", "AGE_EDGES"]

AGE_EDGES = (18, 25, 35, 45, 50, 56)
_N_OCCUPATIONS = 21
_N_GENRES = 19
_N_FACTORS = 6


@dataclass
class SyntheticData:
    ratings: RatingSet
    user_attrs: MultiHotMatrix
    item_attrs: MultiHotMatrix
    user_raw: list  # (orig id, age, gender, occupation)
    item_raw: list  # (orig id, genre flag vector)


def _occupation_of(rng, factors):
    w = rng.standard_normal((_N_OCCUPATIONS, 3))
    scores = factors @ w.T + 0.6 * rng.standard_normal((factors.shape[0], _N_OCCUPATIONS))
    return scores.argmax(axis=1)


def make_dataset(num_users=300, num_items=400, num_ratings=12000, seed=0,
                 noise=0.6) -> SyntheticData:
    """Generate users, items, attributes, and ratings from planted factors."""
    rng = rng_for(seed, "synthetic")

    theta = 0.55 * rng.standard_normal((num_users, _N_FACTORS))
    beta = 0.55 * rng.standard_normal((num_items, _N_FACTORS))
    b_u = 0.4 * rng.standard_normal(num_users)
    b_i = 0.4 * rng.standard_normal(num_items)

    # user attributes from factors; ages kept integer so files round-trip
    ages = np.clip(np.rint(38 + 14 * (theta[:, 1] + 0.3 * rng.standard_normal(num_users))),
                   10, 73).astype(int)
    genders = np.where(theta[:, 0] + 0.3 * rng.standard_normal(num_users) > 0, "M", "F")
    occupations = _occupation_of(rng, theta[:, 2:5])

    # item genres from factors: ~2 flags per item, never zero
    w_g = rng.standard_normal((_N_GENRES, _N_FACTORS))
    scores = beta @ w_g.T + 0.4 * rng.standard_normal((num_items, _N_GENRES))
    cut = np.quantile(scores, 0.90, axis=0)
    flags = (scores > cut).astype(np.float64)
    none = flags.sum(axis=1) == 0
    flags[none, scores[none].argmax(axis=1)] = 1.0

    # distinct (user, item) pairs: cover every node once, then fill with
    # popularity-skewed draws
    target = min(num_ratings, num_users * num_items // 2)
    if target < max(num_users, num_items):
        raise ValueError("num_ratings must cover every user and item at least once")
    pairs = set()
    perm_u = rng.permutation(num_users)
    perm_i = rng.permutation(num_items)
    for k in range(max(num_users, num_items)):
        pairs.add((int(perm_u[k % num_users]), int(perm_i[k % num_items])))
    pu = np.exp(0.8 * rng.standard_normal(num_users))
    pi = np.exp(0.9 * rng.standard_normal(num_items))
    pu /= pu.sum()
    pi /= pi.sum()
    while len(pairs) < target:
        k = target - len(pairs)
        us = rng.choice(num_users, size=2 * k, p=pu)
        vs = rng.choice(num_items, size=2 * k, p=pi)
        for u, i in zip(us, vs):
            pairs.add((int(u), int(i)))
            if len(pairs) >= target:
                break
    pairs = sorted(pairs)

    uu = np.array([u for u, _ in pairs])
    ii = np.array([i for _, i in pairs])
    raw = (3.6 + b_u[uu] + b_i[ii] + np.einsum("kf,kf->k", theta[uu], beta[ii])
           + noise * rng.standard_normal(len(pairs)))
    stars = np.clip(np.rint(raw), 1.0, 5.0)
    triples = [(int(u), int(i), float(r)) for u, i, r in zip(uu, ii, stars)]

    ratings = RatingSet(
        num_users=num_users,
        num_items=num_items,
        triples=triples,
        user_ids=tuple(str(u + 1) for u in range(num_users)),
        item_ids=tuple(str(i + 1) for i in range(num_items)),
    )

    user_schema = AttributeSchema.from_fields([
        ("age", bucket_labels(AGE_EDGES), True),
        ("gender", ("F", "M"), True),
        ("occupation", tuple(f"occ{k:02d}" for k in range(_N_OCCUPATIONS)), True),
    ])
    item_schema = AttributeSchema.from_fields([
        ("genres", tuple(f"g{k:02d}" for k in range(_N_GENRES)), False),
    ])

    user_records = [
        (u, {"age": bucket_label(ages[u], AGE_EDGES),
             "gender": str(genders[u]),
             "occupation": f"occ{occupations[u]:02d}"})
        for u in range(num_users)
    ]
    item_records = [
        (i, {"genres": [f"g{k:02d}" for k in range(_N_GENRES) if flags[i, k] > 0]})
        for i in range(num_items)
    ]
    user_attrs = build_attribute_encoding(user_records, user_schema, num_users)
    item_attrs = build_attribute_encoding(item_records, item_schema, num_items)

    user_raw = [(str(u + 1), int(ages[u]), str(genders[u]), f"occ{occupations[u]:02d}")
                for u in range(num_users)]
    item_raw = [(str(i + 1), flags[i].astype(int).tolist()) for i in range(num_items)]
    return SyntheticData(ratings, user_attrs, item_attrs, user_raw, item_raw)


def write_dataset(data: SyntheticData, outdir) -> dict:
    """Write ratings, attribute tables, and schema configs as loadable files."""
    os.makedirs(outdir, exist_ok=True)
    paths = {
        "ratings": os.path.join(outdir, "ratings.tsv"),
        "user_attrs": os.path.join(outdir, "users.psv"),
        "item_attrs": os.path.join(outdir, "items.psv"),
        "user_schema": os.path.join(outdir, "user_schema.json"),
        "item_schema": os.path.join(outdir, "item_schema.json"),
    }
    with open(paths["ratings"], "w", encoding="utf-8") as fh:
        rs = data.ratings
        for u, i, r in rs.triples:
            fh.write(f"{rs.user_ids[u]}\t{rs.item_ids[i]}\t{int(r)}\n")
    with open(paths["user_attrs"], "w", encoding="utf-8") as fh:
        for orig, age, gender, occ in data.user_raw:
            fh.write(f"{orig}|{age}|{gender}|{occ}\n")
    with open(paths["item_attrs"], "w", encoding="utf-8") as fh:
        for orig, flags in data.item_raw:
            fh.write(orig + "|" + "|".join(str(int(f)) for f in flags) + "\n")
    user_schema_cfg = {
        "delimiter": "|",
        "id_column": 0,
        "fields": [
            {"name": "age", "kind": "bucket", "column": 1, "edges": list(AGE_EDGES)},
            {"name": "gender", "kind": "categorical", "column": 2, "values": ["F", "M"]},
            {"name": "occupation", "kind": "categorical", "column": 3,
             "values": [f"occ{k:02d}" for k in range(_N_OCCUPATIONS)]},
        ],
    }
    item_schema_cfg = {
        "delimiter": "|",
        "id_column": 0,
        "fields": [
            {"name": "genres", "kind": "flags", "start_column": 1,
             "labels": [f"g{k:02d}" for k in range(_N_GENRES)]},
        ],
    }
    with open(paths["user_schema"], "w", encoding="utf-8") as fh:
        json.dump(user_schema_cfg, fh, indent=2)
    with open(paths["item_schema"], "w", encoding="utf-8") as fh:
        json.dump(item_schema_cfg, fh, indent=2)
    return paths
