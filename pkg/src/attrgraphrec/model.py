"""The rating-prediction network over autodiff tensors.

Pipeline per node: multi-hot attributes pass through a linear + pairwise
(bi-interaction) pooling layer into an attribute embedding; that embedding
is fused with the node's trainable preference embedding; a gated
aggregation over sampled attribute-graph neighbors produces the final
embedding; user and item finals meet in an MLP + inner-product scorer.

Cold nodes have no trained preference row.  A variational autoencoder
over the attribute embedding, trained on warm nodes with a penalty
pulling its reconstruction toward the true preference rows, synthesizes
the missing preference at inference (deterministic, zero noise).

Two implementations of the same math live here: per-node ops (the
contract surface, used heavily by the tests) and a batched forward used
for training; a bridge test keeps them identical.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, concat, constant, gather, mean_of

__all__ = [
    "ModelError",
    "ModelConfig",
    "ParameterStore",
    "ForwardContext",
    "bi_interaction",
    "linear_combination",
    "attribute_embed",
    "fuse_node_embedding",
    "gated_aggregate",
    "gated_filter",
    "gated_gnn_forward",
    "evae_encode",
    "evae_decode",
    "evae_loss",
    "cold_preference",
    "substitute_cold_preference",
    "predict_rating",
    "prediction_loss",
    "total_loss",
    "embed_nodes",
    "gnn_embed",
    "batch_forward",
    "batch_loss",
    "save_checkpoint",
    "load_checkpoint",
]


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    num_users: int
    num_items: int
    user_attr_width: int
    item_attr_width: int
    dim: int = 30
    latent_dim: int = 30
    slope: float = 0.01


def _param_specs(cfg: ModelConfig):
    """(name, shape, kind) for every trainable array.

    kind: 'w' weights/embeddings (uniform init), 'b' biases (zero init),
    'z' the log-variance head (zero init so sigma starts at 1).
    """
    d, dz = cfg.dim, cfg.latent_dim
    specs = [
        ("user_pref", (cfg.num_users, d), "w"),
        ("item_pref", (cfg.num_items, d), "w"),
        ("user_bias", (cfg.num_users,), "b"),
        ("item_bias", (cfg.num_items,), "b"),
        ("global_bias", (), "b"),
        ("mlp_w1", (2 * d, d), "w"),
        ("mlp_b1", (d,), "b"),
        ("mlp_w2", (d,), "w"),
        ("mlp_b2", (), "b"),
    ]
    for side, width in (("user", cfg.user_attr_width), ("item", cfg.item_attr_width)):
        specs += [
            (f"{side}_attr_emb", (width, d), "w"),
            (f"{side}_int_w_bi", (d, d), "w"),
            (f"{side}_int_w_lin", (d, d), "w"),
            (f"{side}_int_b", (d,), "b"),
            (f"{side}_fuse_w", (2 * d, d), "w"),
            (f"{side}_fuse_b", (d,), "b"),
            (f"{side}_agg_w", (2 * d, d), "w"),
            (f"{side}_agg_b", (d,), "b"),
            (f"{side}_filt_w", (2 * d, d), "w"),
            (f"{side}_filt_b", (d,), "b"),
            (f"{side}_enc_w1", (d, d), "w"),
            (f"{side}_enc_b1", (d,), "b"),
            (f"{side}_enc_wmu", (d, dz), "w"),
            (f"{side}_enc_bmu", (dz,), "b"),
            (f"{side}_enc_wlv", (d, dz), "z"),
            (f"{side}_enc_blv", (dz,), "z"),
            (f"{side}_dec_w1", (dz, d), "w"),
            (f"{side}_dec_b1", (d,), "b"),
            (f"{side}_dec_w2", (d, d), "w"),
            (f"{side}_dec_b2", (d,), "b"),
        ]
    return specs


class ParameterStore:
    """All trainable parameters, keyed by name, as autodiff leaves."""

    def __init__(self, config: ModelConfig, params: dict):
        self.config = config
        self.params = params

    @classmethod
    def initialize(cls, config: ModelConfig, rng: np.random.Generator,
                   global_bias: float = 0.0, init: str = "default") -> "ParameterStore":
        """Uniform(-0.05, 0.05) weights, zero biases and log-variance head.

        ``global_bias`` seeds the scalar offset of the scorer (typically
        the training-set mean rating).  ``init='uniform'`` randomizes
        every array instead, which keeps finite-difference checks away
        from activation kinks at exactly zero.
        """
        params = {}
        for name, shape, kind in _param_specs(config):
            if kind == "w" or init == "uniform":
                data = rng.uniform(-0.05, 0.05, size=shape)
            else:
                data = np.zeros(shape)
            params[name] = Tensor(data, op=f"param:{name}")
        if init != "uniform":
            params["global_bias"].data[...] = global_bias
        return cls(config, params)

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def copy_data(self) -> dict:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_data(self, arrays: dict):
        for k, p in self.params.items():
            p.data[...] = arrays[k]


# ----------------------------------------------------------------------
# attribute interaction layer
# ----------------------------------------------------------------------

def bi_interaction(a: np.ndarray, V: Tensor) -> Tensor:
    """Sum of pairwise products a_i v_i * a_j v_j (i < j), elementwise.

    Computed with the identity 0.5 * [(sum a_i v_i)^2 - sum (a_i v_i)^2],
    which is linear in K instead of quadratic.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != V.shape[0]:
        raise ad.ShapeError("bi_interaction", a.shape, V.shape)
    lin = constant(a) @ V
    sq = constant(a * a) @ ad.mul(V, V)
    return ad.scale(ad.sub(ad.square(lin), sq), 0.5)


def linear_combination(a: np.ndarray, V: Tensor) -> Tensor:
    """Sum of active attribute embeddings: a @ V."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != V.shape[0]:
        raise ad.ShapeError("linear_combination", a.shape, V.shape)
    return constant(a) @ V


def attribute_embed(a: np.ndarray, store: ParameterStore, side: str) -> Tensor:
    """Attribute embedding: LeakyReLU(W1 bi + W0 lin + b)."""
    V = store[f"{side}_attr_emb"]
    pre = ad.add(
        ad.add(bi_interaction(a, V) @ store[f"{side}_int_w_bi"],
               linear_combination(a, V) @ store[f"{side}_int_w_lin"]),
        store[f"{side}_int_b"],
    )
    return ad.leaky_relu(pre, store.config.slope)


def fuse_node_embedding(m: Tensor, x: Tensor, store: ParameterStore, side: str) -> Tensor:
    """Node embedding from preference and attribute parts: W [m; x] + b."""
    return ad.add(concat([m, x]) @ store[f"{side}_fuse_w"], store[f"{side}_fuse_b"])


# ----------------------------------------------------------------------
# gated aggregation
# ----------------------------------------------------------------------

def gated_aggregate(p: Tensor, neighbors, store: ParameterStore, side: str,
                    return_gates: bool = False):
    """Mean of neighbor embeddings, each passed through its own
    elementwise sigmoid gate conditioned on [target; neighbor]."""
    if not neighbors:
        raise ModelError("gated_aggregate requires at least one neighbor")
    W, b = store[f"{side}_agg_w"], store[f"{side}_agg_b"]
    gates, gated = [], []
    for pf in neighbors:
        gate = ad.sigmoid(ad.add(concat([p, pf]) @ W, b))
        gates.append(gate)
        gated.append(ad.mul(pf, gate))
    out = mean_of(gated)
    return (out, gates) if return_gates else out


def gated_filter(p: Tensor, neighbors, store: ParameterStore, side: str,
                 return_gates: bool = False):
    """Remaining target representation p * (1 - f_gate), where the gate is
    conditioned on [target; neighborhood mean]."""
    if not neighbors:
        raise ModelError("gated_filter requires at least one neighbor")
    W, b = store[f"{side}_filt_w"], store[f"{side}_filt_b"]
    nbar = mean_of(neighbors)
    f_gate = ad.sigmoid(ad.add(concat([p, nbar]) @ W, b))
    out = ad.mul(p, ad.add_const(ad.scale(f_gate, -1.0), 1.0))
    return (out, f_gate) if return_gates else out


def gated_gnn_forward(p: Tensor, neighbors, store: ParameterStore, side: str) -> Tensor:
    """Final embedding: LeakyReLU(filtered target + gated aggregate).

    An empty neighborhood contributes nothing and filters nothing, so the
    result degrades to LeakyReLU(p).
    """
    slope = store.config.slope
    if not neighbors:
        return ad.leaky_relu(p, slope)
    return ad.leaky_relu(
        ad.add(gated_filter(p, neighbors, store, side),
               gated_aggregate(p, neighbors, store, side)),
        slope,
    )


# ----------------------------------------------------------------------
# variational preference synthesis
# ----------------------------------------------------------------------

def evae_encode(x: Tensor, eps: np.ndarray, store: ParameterStore, side: str):
    """Posterior parameters and a reparameterized sample.

    Returns (z, mu, sigma) with z = mu + eps * sigma and
    sigma = exp(logvar / 2), so sigma is positive by construction.
    """
    slope = store.config.slope
    h = ad.leaky_relu(ad.add(x @ store[f"{side}_enc_w1"], store[f"{side}_enc_b1"]), slope)
    mu = ad.add(h @ store[f"{side}_enc_wmu"], store[f"{side}_enc_bmu"])
    logvar = ad.add(h @ store[f"{side}_enc_wlv"], store[f"{side}_enc_blv"])
    sigma = ad.exp(ad.scale(logvar, 0.5))
    z = ad.add(mu, ad.mul(constant(eps), sigma))
    return z, mu, sigma


def evae_decode(z: Tensor, store: ParameterStore, side: str) -> Tensor:
    """Reconstruction MLP from the latent sample back to embedding space."""
    slope = store.config.slope
    h = ad.leaky_relu(ad.add(z @ store[f"{side}_dec_w1"], store[f"{side}_dec_b1"]), slope)
    return ad.add(h @ store[f"{side}_dec_w2"], store[f"{side}_dec_b2"])


def _kl_standard_normal(mu: Tensor, sigma: Tensor) -> Tensor:
    """KL(N(mu, diag sigma^2) || N(0, I)) summed over all elements."""
    n = mu.data.size
    s = ad.add(ad.tsum(ad.square(mu)), ad.tsum(ad.square(sigma)))
    s = ad.add(s, ad.scale(ad.tsum(ad.log(sigma)), -2.0))
    return ad.scale(ad.add_const(s, -float(n)), 0.5)


def evae_loss(x: Tensor, x_recon: Tensor, mu: Tensor, sigma: Tensor, m: Tensor) -> Tensor:
    """Reconstruction objective, minimized.

    KL to the standard-normal prior, plus the Gaussian reconstruction
    term 0.5 ||x' - x||^2, plus the unsquared Euclidean pull ||x' - m||
    toward the true preference embedding.
    """
    kl = _kl_standard_normal(mu, sigma)
    gauss = ad.scale(ad.tsum(ad.square(ad.sub(x_recon, x))), 0.5)
    approx = ad.l2norm(ad.sub(x_recon, m))
    return ad.add(ad.add(kl, gauss), approx)


def cold_preference(x: Tensor, store: ParameterStore, side: str) -> Tensor:
    """Synthesized preference embedding: decode(encode(x)) at zero noise."""
    z, _, _ = evae_encode(x, np.zeros(store.config.latent_dim), store, side)
    return evae_decode(z, store, side)


def substitute_cold_preference(node: int, x: Tensor, store: ParameterStore, side: str,
                               cold_ids) -> Tensor:
    """Preference embedding for a cold node; warm nodes must use their
    table row, so asking to substitute one is an error."""
    if node not in cold_ids:
        raise ModelError(f"{side} node {node} is warm; preference substitution is cold-only")
    return cold_preference(x, store, side)


# ----------------------------------------------------------------------
# prediction and losses
# ----------------------------------------------------------------------

def predict_rating(p_t: Tensor, q_t: Tensor, store: ParameterStore, u: int, i: int,
                   user_cold: bool = False, item_cold: bool = False) -> Tensor:
    """Scalar rating: MLP([p; q]) + p.q + b_u + b_i + mu (cold biases 0)."""
    slope = store.config.slope
    h = ad.leaky_relu(ad.add(concat([p_t, q_t]) @ store["mlp_w1"], store["mlp_b1"]), slope)
    score = ad.add(h @ store["mlp_w2"], store["mlp_b2"])
    score = ad.add(score, p_t @ q_t)
    if not user_cold:
        score = ad.add(score, ad.tsum(gather(store["user_bias"], [u])))
    if not item_cold:
        score = ad.add(score, ad.tsum(gather(store["item_bias"], [i])))
    return ad.add(score, store["global_bias"])


def prediction_loss(predictions, ratings) -> Tensor:
    """Sum of squared errors over the batch."""
    if isinstance(predictions, Tensor):
        if predictions.data.size == 0:
            raise ModelError("prediction_loss over an empty batch")
        return ad.tsum(ad.square(ad.add(predictions, constant(-np.asarray(ratings, dtype=np.float64)))))
    if not predictions:
        raise ModelError("prediction_loss over an empty batch")
    terms = [ad.square(ad.add_const(p, -float(r))) for p, r in zip(predictions, ratings)]
    loss = terms[0]
    for t in terms[1:]:
        loss = ad.add(loss, t)
    return loss


def total_loss(pred_loss: Tensor, recon_loss: Tensor) -> Tensor:
    """Training objective: prediction loss plus reconstruction loss."""
    return ad.add(pred_loss, recon_loss)


# ----------------------------------------------------------------------
# batched forward (training/evaluation path)
# ----------------------------------------------------------------------

@dataclass
class ForwardContext:
    """Static per-split data the forward pass reads.

    ``user_neighbors``/``item_neighbors`` hold the current epoch's sampled
    neighbor ids per node.  Cold masks mark nodes whose preference rows
    must be synthesized (never trained).
    """

    user_attrs: np.ndarray
    item_attrs: np.ndarray
    user_cold: np.ndarray
    item_cold: np.ndarray
    user_neighbors: list
    item_neighbors: list
    evae_enabled: bool = True
    mean_aggregation: bool = False


def _affine_pair(A: Tensor, B: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """[A; B] @ W + b via split weights, avoiding the column concat.

    Mathematically identical to concat([A, B], axis=1) @ W + b.
    """
    d = A.data.shape[-1]
    W_top = gather(W, np.arange(d), unique=True)
    W_bot = gather(W, np.arange(d, W.data.shape[0]), unique=True)
    return ad.add(ad.add(A @ W_top, B @ W_bot), b)


def embed_nodes(store: ParameterStore, side: str, node_ids: np.ndarray,
                attrs: np.ndarray, cold_mask: np.ndarray, evae_enabled: bool = True):
    """Interaction layer + preference fusion for a set of nodes.

    Cold nodes get decode(encode(x)) at zero noise as their preference
    row (or a zero row when the synthesis branch is disabled).
    Returns (P, X): node embeddings and attribute embeddings, row per id.
    """
    cfg = store.config
    A = attrs[node_ids]
    V = store[f"{side}_attr_emb"]
    lin = constant(A) @ V
    sq = constant(A * A) @ ad.mul(V, V)
    bi = ad.scale(ad.sub(ad.square(lin), sq), 0.5)
    pre = ad.add(ad.add(bi @ store[f"{side}_int_w_bi"], lin @ store[f"{side}_int_w_lin"]),
                 store[f"{side}_int_b"])
    X = ad.leaky_relu(pre, cfg.slope)

    table = store[f"{side}_pref"]
    cold_here = cold_mask[node_ids]
    if cold_here.any():
        warm_sel = np.where(~cold_here)[0]
        cold_sel = np.where(cold_here)[0]
        m_warm = gather(table, node_ids[warm_sel], unique=True)
        x_cold = gather(X, cold_sel, unique=True)
        if evae_enabled:
            z, _, _ = _encode_rows(store, side, x_cold, np.zeros((len(cold_sel), cfg.latent_dim)))
            m_cold = _decode_rows(store, side, z)
        else:
            m_cold = constant(np.zeros((len(cold_sel), cfg.dim)))
        stacked = concat([m_warm, m_cold], axis=0)
        inv = np.empty(len(node_ids), dtype=np.intp)
        inv[warm_sel] = np.arange(len(warm_sel))
        inv[cold_sel] = len(warm_sel) + np.arange(len(cold_sel))
        M = gather(stacked, inv, unique=True)
    else:
        M = gather(table, node_ids, unique=True)

    P = _affine_pair(M, X, store[f"{side}_fuse_w"], store[f"{side}_fuse_b"])
    return P, X


def _encode_rows(store, side, X: Tensor, eps: np.ndarray):
    slope = store.config.slope
    h = ad.leaky_relu(ad.add(X @ store[f"{side}_enc_w1"], store[f"{side}_enc_b1"]), slope)
    mu = ad.add(h @ store[f"{side}_enc_wmu"], store[f"{side}_enc_bmu"])
    logvar = ad.add(h @ store[f"{side}_enc_wlv"], store[f"{side}_enc_blv"])
    sigma = ad.exp(ad.scale(logvar, 0.5))
    z = ad.add(mu, ad.mul(constant(eps), sigma))
    return z, mu, sigma


def _decode_rows(store, side, Z: Tensor) -> Tensor:
    slope = store.config.slope
    h = ad.leaky_relu(ad.add(Z @ store[f"{side}_dec_w1"], store[f"{side}_dec_b1"]), slope)
    return ad.add(h @ store[f"{side}_dec_w2"], store[f"{side}_dec_b2"])


def gnn_embed(store: ParameterStore, side: str, P: Tensor, tgt_pos: np.ndarray,
              nbr_pos_lists, mean_aggregation: bool = False) -> Tensor:
    """Gated neighborhood aggregation for the target rows of P.

    ``nbr_pos_lists[t]`` holds row positions (into P) of target t's
    sampled neighbors.  Targets without neighbors pass through untouched
    (no aggregation, no filtering).
    """
    cfg = store.config
    t = len(tgt_pos)
    P_t = gather(P, tgt_pos, unique=True)
    counts = np.array([len(x) for x in nbr_pos_lists], dtype=np.intp)
    total = int(counts.sum())
    if total == 0:
        return ad.leaky_relu(P_t, cfg.slope)

    pair_tgt = np.repeat(np.asarray(tgt_pos), counts)
    pair_nbr = np.concatenate([np.asarray(x, dtype=np.intp) for x in nbr_pos_lists if len(x)])
    seg = np.repeat(np.arange(t), counts)
    P_np = gather(P, pair_nbr)

    if mean_aggregation:
        # plain neighbor mean, no gates
        agg = ad.segment_mean(P_np, seg, t)
        return ad.leaky_relu(ad.add(P_t, agg), cfg.slope)

    P_tp = gather(P, pair_tgt)
    a_gate = ad.sigmoid(_affine_pair(P_tp, P_np, store[f"{side}_agg_w"], store[f"{side}_agg_b"]))
    agg = ad.segment_mean(ad.mul(P_np, a_gate), seg, t)
    nbar = ad.segment_mean(P_np, seg, t)
    f_gate = ad.sigmoid(_affine_pair(P_t, nbar, store[f"{side}_filt_w"], store[f"{side}_filt_b"]))
    has = (counts > 0).astype(np.float64)
    mask = constant(np.broadcast_to(has[:, None], (t, cfg.dim)).copy())
    keep = ad.add_const(ad.scale(ad.mul(f_gate, mask), -1.0), 1.0)
    p_minus = ad.mul(P_t, keep)
    return ad.leaky_relu(ad.add(p_minus, agg), cfg.slope)


def batch_forward(store: ParameterStore, users: np.ndarray, items: np.ndarray,
                  ctx: ForwardContext):
    """Predicted ratings for the (users[j], items[j]) pairs.

    Embeds only the nodes the batch touches (targets plus their sampled
    neighbors), aggregates, and scores.  Returns (predictions, aux) where
    aux carries the per-side tensors the loss needs.
    """
    users = np.asarray(users, dtype=np.intp)
    items = np.asarray(items, dtype=np.intp)

    sides = {}
    for side, targets, attrs, cold, nbrs in (
        ("user", users, ctx.user_attrs, ctx.user_cold, ctx.user_neighbors),
        ("item", items, ctx.item_attrs, ctx.item_cold, ctx.item_neighbors),
    ):
        uniq = np.unique(targets)
        nbr_ids = [np.asarray(nbrs[n], dtype=np.intp) for n in uniq]
        need = np.unique(np.concatenate([uniq] + nbr_ids)) if nbr_ids else uniq
        P, X = embed_nodes(store, side, need, attrs, cold, ctx.evae_enabled)
        tgt_pos = np.searchsorted(need, uniq)
        nbr_pos = [np.searchsorted(need, ids) for ids in nbr_ids]
        P_t = gnn_embed(store, side, P, tgt_pos, nbr_pos, ctx.mean_aggregation)
        sides[side] = {"uniq": uniq, "need": need, "P_final": P_t, "X": X, "cold": cold}

    su, si = sides["user"], sides["item"]
    u_rows = np.searchsorted(su["uniq"], users)
    i_rows = np.searchsorted(si["uniq"], items)
    Pb = gather(su["P_final"], u_rows)
    Qb = gather(si["P_final"], i_rows)
    slope = store.config.slope
    H = ad.leaky_relu(_affine_pair(Pb, Qb, store["mlp_w1"], store["mlp_b1"]), slope)
    mlp = ad.add(H @ store["mlp_w2"], store["mlp_b2"])
    inner = ad.tsum(ad.mul(Pb, Qb), axis=1)
    bu = ad.mul(gather(store["user_bias"], users),
                constant(1.0 - ctx.user_cold[users].astype(np.float64)))
    bi = ad.mul(gather(store["item_bias"], items),
                constant(1.0 - ctx.item_cold[items].astype(np.float64)))
    preds = ad.add(ad.add(ad.add(ad.add(mlp, inner), bu), bi), store["global_bias"])
    return preds, sides


def _recon_rows(store, side, X_rows: Tensor, M_rows: Tensor, eps: np.ndarray) -> Tensor:
    """eVAE loss summed over the given warm rows."""
    z, mu, sigma = _encode_rows(store, side, X_rows, eps)
    xr = _decode_rows(store, side, z)
    kl = _kl_standard_normal(mu, sigma)
    gauss = ad.scale(ad.tsum(ad.square(ad.sub(xr, X_rows))), 0.5)
    approx = ad.tsum(ad.l2norm(ad.sub(xr, M_rows), axis=1))
    return ad.add(ad.add(kl, gauss), approx)


def batch_loss(store: ParameterStore, users, items, ratings, ctx: ForwardContext,
               eps_rng: np.random.Generator | None = None):
    """Training loss over one mini-batch.

    Prediction term over all pairs; reconstruction term over the warm
    target nodes in the batch (cold nodes never contribute).  ``eps_rng``
    draws the VAE noise; None means deterministic zero noise.

    The reconstruction term treats the attribute embeddings and the
    preference rows as fixed targets (no gradient flows into them), so it
    trains the encoder/decoder head only.  Letting it pull on the
    preference table collapses the table toward zero, since an unsquared
    norm keeps unit-magnitude gradients however close the two sides get.
    """
    users = np.asarray(users, dtype=np.intp)
    items = np.asarray(items, dtype=np.intp)
    preds, sides = batch_forward(store, users, items, ctx)
    loss = prediction_loss(preds, ratings)
    if ctx.evae_enabled:
        dz = store.config.latent_dim
        for side, cold_mask in (("user", ctx.user_cold), ("item", ctx.item_cold)):
            s = sides[side]
            warm = s["uniq"][~cold_mask[s["uniq"]]]
            if warm.size == 0:
                continue
            pos = np.searchsorted(s["need"], warm)
            X_rows = constant(s["X"].data[pos])
            M_rows = constant(store[f"{side}_pref"].data[warm])
            eps = (eps_rng.standard_normal((warm.size, dz)) if eps_rng is not None
                   else np.zeros((warm.size, dz)))
            loss = ad.add(loss, _recon_rows(store, side, X_rows, M_rows, eps))
    return loss, preds


# ----------------------------------------------------------------------
# checkpointing
# ----------------------------------------------------------------------

def save_checkpoint(store: ParameterStore, path, extra: dict | None = None) -> None:
    """Single-file checkpoint: every parameter array plus the config."""
    meta = {"config": asdict(store.config), "extra": extra or {}}
    arrays = {f"param::{k}": p.data for k, p in store.params.items()}
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
             **arrays)


def load_checkpoint(path) -> tuple[ParameterStore, dict]:
    with np.load(path) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        cfg = ModelConfig(**meta["config"])
        params = {}
        for key in z.files:
            if key.startswith("param::"):
                params[key[len("param::"):]] = Tensor(z[key].copy(), op=f"param:{key}")
    expected = {name for name, _, _ in _param_specs(cfg)}
    if set(params) != expected:
        raise ModelError("checkpoint parameters do not match the config's layout")
    for name, shape, _ in _param_specs(cfg):
        if params[name].data.shape != shape:
            raise ModelError(f"checkpoint parameter {name} has shape "
                             f"{params[name].data.shape}, config wants {shape}")
    return ParameterStore(cfg, params), meta["extra"]
