"""User-user and item-item attribute graphs.

Pairwise node proximity combines two cosine-distance kernels: one over
rating rows (preference) and one over multi-hot attribute rows.  Each
distance matrix is min-max normalized, converted to a similarity, and the
two are summed onto a [0, 2] scale.  Nodes without training ratings have
no preference term; their pairs are scored from attributes alone, scaled
by two so they live on the same range.

Each node keeps a candidate pool of its top-p% most similar nodes, and a
fresh neighbor set is sampled from the pool (probability proportional to
similarity) every training epoch.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GraphError",
    "ProximityMatrix",
    "AttributeGraph",
    "cosine_distance",
    "cosine_distance_matrix",
    "preference_proximity",
    "attribute_proximity",
    "combine_proximities",
    "build_candidate_pools",
    "build_attribute_graph",
    "sample_neighbors",
    "rating_rows",
    "save_graph",
    "load_graph",
]

# keeps every pool member reachable by the sampler even at similarity 0
WEIGHT_FLOOR = 1e-9


class GraphError(ValueError):
    pass


@dataclass
class ProximityMatrix:
    """Combined pairwise similarity in [0, 2] plus availability flags.

    ``pref_missing[i, j]`` marks pairs whose preference term was
    unavailable (at least one node had no training ratings) and whose
    score therefore came from attributes alone.
    """

    sim: np.ndarray
    pref_missing: np.ndarray


@dataclass
class AttributeGraph:
    """Per-node candidate pools: ids and sampling weights, plus the pool
    percentage that produced them."""

    pool_ids: list
    pool_weights: list
    pool_percent: float

    @property
    def num_nodes(self) -> int:
        return len(self.pool_ids)


# ----------------------------------------------------------------------
# proximity kernels
# ----------------------------------------------------------------------

def cosine_distance(w, v) -> float:
    """1 - cos(w, v) in [0, 2]; a zero vector yields the neutral 1.0."""
    w = np.asarray(w, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nw = np.linalg.norm(w)
    nv = np.linalg.norm(v)
    if nw == 0.0 or nv == 0.0:
        return 1.0
    return float(np.clip(1.0 - (w @ v) / (nw * nv), 0.0, 2.0))


def cosine_distance_matrix(rows: np.ndarray) -> np.ndarray:
    """All-pairs cosine distance over the rows; zero rows get neutral 1."""
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = rows / safe[:, None]
    dist = 1.0 - unit @ unit.T
    zero = norms == 0.0
    dist[zero, :] = 1.0
    dist[:, zero] = 1.0
    np.clip(dist, 0.0, 2.0, out=dist)
    np.fill_diagonal(dist, 0.0)
    return dist


def rating_rows(triples, num_nodes: int, counterpart: int, axis: str) -> np.ndarray:
    """Dense rating-row matrix for one side, from training triples only.

    ``axis='user'`` gives one row per user over items; ``axis='item'``
    one row per item over users.
    """
    rows = np.zeros((num_nodes, counterpart))
    for u, i, r in triples:
        if axis == "user":
            rows[u, i] = r
        else:
            rows[i, u] = r
    return rows


def preference_proximity(rating_rows_matrix: np.ndarray):
    """Cosine distances over rating rows plus per-node availability.

    Nodes with no training ratings (all-zero rows) cannot be scored;
    they are flagged rather than given a fake distance.
    """
    rows = np.asarray(rating_rows_matrix, dtype=np.float64)
    available = (rows != 0.0).any(axis=1)
    return cosine_distance_matrix(rows), available


def attribute_proximity(multihot_rows: np.ndarray) -> np.ndarray:
    """Cosine distances over multi-hot attribute rows (always available)."""
    return cosine_distance_matrix(multihot_rows)


def _minmax_offdiag(dist: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Min-max normalize over the valid off-diagonal entries.

    Degenerate matrices (max == min among valid pairs, or no valid pairs)
    normalize to 0 everywhere.
    """
    off = valid & ~np.eye(dist.shape[0], dtype=bool)
    if not off.any():
        return np.zeros_like(dist)
    lo = dist[off].min()
    hi = dist[off].max()
    if hi == lo:
        return np.zeros_like(dist)
    out = (dist - lo) / (hi - lo)
    return np.clip(out, 0.0, 1.0)


def combine_proximities(pref_dist: np.ndarray, attr_dist: np.ndarray,
                        pref_available: np.ndarray) -> ProximityMatrix:
    """Fuse the two normalized distance kernels into one similarity.

    Warm pairs score (1 - pref_norm) + (1 - attr_norm); pairs missing the
    preference term score 2 * (1 - attr_norm) so both kinds share the
    [0, 2] scale.  Preference min/max statistics exclude unavailable
    pairs.
    """
    if pref_dist.shape != attr_dist.shape:
        raise GraphError(f"proximity shapes differ: {pref_dist.shape} vs {attr_dist.shape}")
    n = pref_dist.shape[0]
    pair_ok = np.logical_and.outer(pref_available, pref_available)
    pref_norm = _minmax_offdiag(pref_dist, pair_ok)
    attr_norm = _minmax_offdiag(attr_dist, np.ones((n, n), dtype=bool))
    attr_sim = 1.0 - attr_norm
    sim = np.where(pair_ok, (1.0 - pref_norm) + attr_sim, 2.0 * attr_sim)
    sim = (sim + sim.T) / 2.0  # symmetrize against float noise
    np.fill_diagonal(sim, 0.0)
    return ProximityMatrix(sim=sim, pref_missing=~pair_ok)


# ----------------------------------------------------------------------
# candidate pools and dynamic sampling
# ----------------------------------------------------------------------

def build_candidate_pools(prox: ProximityMatrix, pool_percent: float) -> AttributeGraph:
    """Per node, keep the ceil(p% of (n-1)) most similar other nodes.

    Ties at the cutoff break by ascending node id, making pools
    deterministic.
    """
    if not (0.0 < pool_percent <= 100.0):
        raise GraphError(f"pool percent must be in (0, 100], got {pool_percent}")
    n = prox.sim.shape[0]
    if n < 2:
        raise GraphError(f"need at least 2 nodes to build pools, got {n}")
    pool_size = math.ceil((pool_percent / 100.0) * (n - 1))
    ids, weights = [], []
    for u in range(n):
        sim_u = prox.sim[u].copy()
        sim_u[u] = -np.inf  # no self-loops
        # sort by similarity descending, ties by ascending id
        order = np.lexsort((np.arange(n), -sim_u))[:pool_size]
        chosen = np.sort(order)
        ids.append(chosen.astype(np.int64))
        weights.append(np.maximum(prox.sim[u, chosen], WEIGHT_FLOOR))
    return AttributeGraph(pool_ids=ids, pool_weights=weights, pool_percent=pool_percent)


def build_attribute_graph(train_triples, multihot_rows: np.ndarray, num_nodes: int,
                          counterpart: int, axis: str, pool_percent: float) -> AttributeGraph:
    """Convenience pipeline: rating rows -> proximities -> candidate pools."""
    pref_dist, available = preference_proximity(
        rating_rows(train_triples, num_nodes, counterpart, axis)
    )
    attr_dist = attribute_proximity(multihot_rows)
    prox = combine_proximities(pref_dist, attr_dist, available)
    return build_candidate_pools(prox, pool_percent)


def sample_neighbors(graph: AttributeGraph, k: int, rng: np.random.Generator) -> list:
    """Draw min(k, pool size) neighbors per node, without replacement,
    with probability proportional to pool weight.  Returned lists are
    sorted by id so downstream aggregation is order-independent."""
    if k < 1:
        raise GraphError(f"sample size must be >= 1, got {k}")
    sampled = []
    for ids, weights in zip(graph.pool_ids, graph.pool_weights):
        if len(ids) == 0:
            sampled.append(np.empty(0, dtype=np.int64))
            continue
        take = min(k, len(ids))
        p = weights / weights.sum()
        pick = rng.choice(len(ids), size=take, replace=False, p=p)
        sampled.append(np.sort(ids[pick]))
    return sampled


# ----------------------------------------------------------------------
# JSON dump for inspection and golden-file tests
# ----------------------------------------------------------------------

def save_graph(graph: AttributeGraph, path) -> None:
    doc = {
        "pool_percent": graph.pool_percent,
        "pools": {
            str(u): [[int(i), float(w)] for i, w in zip(ids, weights)]
            for u, (ids, weights) in enumerate(zip(graph.pool_ids, graph.pool_weights))
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_graph(path) -> AttributeGraph:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    n = len(doc["pools"])
    ids = [None] * n
    weights = [None] * n
    for key, entries in doc["pools"].items():
        u = int(key)
        ids[u] = np.array([e[0] for e in entries], dtype=np.int64)
        weights[u] = np.array([e[1] for e in entries])
    return AttributeGraph(pool_ids=ids, pool_weights=weights,
                          pool_percent=doc["pool_percent"])
