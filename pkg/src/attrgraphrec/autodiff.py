"""Reverse-mode automatic differentiation over dense float64 arrays.

Everything the model computes is expressed through :class:`Tensor` nodes.
A Tensor wraps a numpy array (scalar, vector, or matrix), a same-shape
gradient slot, and the parent links that form the computation record.
``backward(loss)`` walks that record once in reverse creation order and
adds the pass gradients into each node's ``grad`` slot, so gradients
accumulate across calls until ``zero_grad`` is invoked.

Only the operations the network actually needs are implemented; there is
no general broadcasting.  Supported shape combinations are documented on
each op and enforced with :class:`ShapeError`.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.special import expit

__all__ = [
    "Tensor",
    "ShapeError",
    "constant",
    "backward",
    "concat",
    "gather",
    "mean_of",
]


class ShapeError(ValueError):
    """Operand shapes do not conform for an op.

    Carries the op name and the offending shapes so callers (and tests)
    can inspect what went wrong without parsing the message.
    """

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        pretty = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: operand shapes do not conform: {pretty}")


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """One node of the computation record.

    ``data`` and ``grad`` always have identical shapes.  ``parents`` holds
    the operand nodes; the record is acyclic by construction because an op
    result is created strictly after its operands, which also makes
    descending creation order a valid reverse topological order.

    Leaves default to ``requires_grad=True`` (parameters).  Use
    :func:`constant` for inputs that never need gradients; ops skip the
    gradient math for such operands.
    """

    _counter = itertools.count()

    __slots__ = ("data", "_grad", "parents", "op", "requires_grad", "_vjp", "_id")

    def __init__(self, data, parents=(), op="leaf", requires_grad=None, vjp=None):
        self.data = _as_array(data)
        self._grad = None  # materialized lazily; equivalent to zeros
        self.parents = tuple(parents)
        self.op = op
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self.parents) if self.parents else True
        self.requires_grad = requires_grad
        # _vjp(g) -> iterable of (parent, gradient contribution)
        self._vjp = vjp
        self._id = next(Tensor._counter)

    # ------------------------------------------------------------------
    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self._grad = None

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape}, id={self._id})"

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    # -- reductions / elementwise ---------------------------------------
    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def square(self):
        return square(self)

    def exp(self):
        return exp(self)

    def sigmoid(self):
        return sigmoid(self)

    def leaky_relu(self, slope=0.01):
        return leaky_relu(self, slope)

    def l2norm(self, axis=None):
        return l2norm(self, axis)

    def scale(self, c):
        return scale(self, c)

    def add_const(self, c):
        return add_const(self, c)


def constant(data) -> Tensor:
    """A Tensor that never receives gradients (inputs, masks, targets)."""
    return Tensor(data, op="const", requires_grad=False)


def _wrap(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return constant(x)


# ----------------------------------------------------------------------
# op constructors
# ----------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum.  Shapes: equal, (m,n)+(n,) row bias, or x+scalar."""
    sa, sb = a.data.shape, b.data.shape
    if sa == sb:
        mode = "same"
    elif len(sa) == 2 and sb == (sa[1],):
        mode = "row"
    elif sb == ():
        mode = "scalar"
    elif sa == () and len(sb) >= 1:
        return add(b, a)
    elif len(sb) == 2 and sa == (sb[1],):
        return add(b, a)
    else:
        raise ShapeError("add", sa, sb)

    out = Tensor(a.data + b.data, (a, b), "add")

    def vjp(g):
        contribs = []
        if a.requires_grad:
            contribs.append((a, g))
        if b.requires_grad:
            if mode == "same":
                contribs.append((b, g))
            elif mode == "row":
                contribs.append((b, g.sum(axis=0)))
            else:  # scalar
                contribs.append((b, np.asarray(g.sum())))
        return contribs

    out._vjp = vjp
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data, (a,), "neg")
    out._vjp = lambda g: [(a, -g)] if a.requires_grad else []
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise difference of same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ShapeError("sub", a.data.shape, b.data.shape)
    out = Tensor(a.data - b.data, (a, b), "sub")

    def vjp(g):
        contribs = []
        if a.requires_grad:
            contribs.append((a, g))
        if b.requires_grad:
            contribs.append((b, -g))
        return contribs

    out._vjp = vjp
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product.  Shapes: equal, or either operand scalar."""
    sa, sb = a.data.shape, b.data.shape
    if not (sa == sb or sa == () or sb == ()):
        raise ShapeError("mul", sa, sb)
    out = Tensor(a.data * b.data, (a, b), "mul")

    def vjp(g):
        contribs = []
        if a.requires_grad:
            ga = g * b.data
            contribs.append((a, np.asarray(ga.sum()) if sa == () and ga.shape != () else ga))
        if b.requires_grad:
            gb = g * a.data
            contribs.append((b, np.asarray(gb.sum()) if sb == () and gb.shape != () else gb))
        return contribs

    out._vjp = vjp
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for the 1-d/2-d shape combinations numpy allows."""
    sa, sb = a.data.shape, b.data.shape
    if len(sa) == 0 or len(sb) == 0 or len(sa) > 2 or len(sb) > 2:
        raise ShapeError("matmul", sa, sb)
    if sa[-1] != sb[0]:
        raise ShapeError("matmul", sa, sb)
    out = Tensor(a.data @ b.data, (a, b), "matmul")

    def vjp(g):
        contribs = []
        ad, bd = a.data, b.data
        if len(sa) == 2 and len(sb) == 2:
            if a.requires_grad:
                contribs.append((a, g @ bd.T))
            if b.requires_grad:
                contribs.append((b, ad.T @ g))
        elif len(sa) == 2 and len(sb) == 1:
            # (m,n) @ (n,) -> (m,)
            if a.requires_grad:
                contribs.append((a, np.outer(g, bd)))
            if b.requires_grad:
                contribs.append((b, ad.T @ g))
        elif len(sa) == 1 and len(sb) == 2:
            # (m,) @ (m,n) -> (n,)
            if a.requires_grad:
                contribs.append((a, bd @ g))
            if b.requires_grad:
                contribs.append((b, np.outer(ad, g)))
        else:
            # (n,) @ (n,) -> scalar dot
            if a.requires_grad:
                contribs.append((a, g * bd))
            if b.requires_grad:
                contribs.append((b, g * ad))
        return contribs

    out._vjp = vjp
    return out


def concat(tensors, axis=0) -> Tensor:
    """Concatenate 1-d vectors (axis 0) or matrices along axis 0 or 1."""
    tensors = [_wrap(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat")
    ndim = tensors[0].ndim
    for t in tensors:
        if t.ndim != ndim:
            raise ShapeError("concat", *(x.shape for x in tensors))
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = Tensor(data, tuple(tensors), "concat")
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        contribs = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if not t.requires_grad:
                continue
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            contribs.append((t, g[tuple(sl)]))
        return contribs

    out._vjp = vjp
    return out


def gather(x: Tensor, indices, unique: bool = False) -> Tensor:
    """Select rows (2-d) or elements (1-d) of ``x`` along axis 0.

    Backward scatter-adds, so repeated indices accumulate correctly;
    callers that can promise distinct indices may pass ``unique=True``
    for a cheaper scatter.
    """
    idx = np.asarray(indices, dtype=np.intp)
    if x.ndim not in (1, 2):
        raise ShapeError("gather", x.shape)
    out = Tensor(x.data[idx], (x,), "gather")

    def vjp(g):
        if not x.requires_grad:
            return []
        gx = np.zeros_like(x.data)
        if unique:
            gx[idx] = g
        elif x.data.ndim == 1:
            gx[...] = np.bincount(idx, weights=g, minlength=x.data.shape[0])
        else:
            n, d = x.data.shape
            flat_idx = (idx[:, None] * d + np.arange(d)).ravel()
            gx[...] = np.bincount(flat_idx, weights=np.ascontiguousarray(g).ravel(),
                                  minlength=n * d).reshape(n, d)
        return [(x, gx)]

    out._vjp = vjp
    return out


def segment_mean(x: Tensor, segment_ids, num_segments: int) -> Tensor:
    """Row-wise mean of ``x`` within each segment; empty segments give
    zero rows.  Used for neighborhood averaging."""
    seg = np.asarray(segment_ids, dtype=np.intp)
    if x.ndim != 2 or seg.shape != (x.data.shape[0],):
        raise ShapeError("segment_mean", x.shape, seg.shape)
    n, d = x.data.shape
    counts = np.bincount(seg, minlength=num_segments)
    flat_idx = (seg[:, None] * d + np.arange(d)).ravel()
    sums = np.bincount(flat_idx, weights=x.data.ravel(), minlength=num_segments * d)
    safe = np.where(counts == 0, 1, counts)
    mean = sums.reshape(num_segments, d) / safe[:, None]
    out = Tensor(mean, (x,), "segment_mean")

    def vjp(g):
        if not x.requires_grad:
            return []
        return [(x, g[seg] / safe[seg][:, None])]

    out._vjp = vjp
    return out


def tsum(x: Tensor, axis=None) -> Tensor:
    """Sum over all elements (axis=None) or along one axis of a matrix."""
    out = Tensor(x.data.sum(axis=axis), (x,), "sum")

    def vjp(g):
        if not x.requires_grad:
            return []
        if axis is None:
            return [(x, np.broadcast_to(g, x.data.shape).copy())]
        g_exp = np.expand_dims(g, axis)
        return [(x, np.broadcast_to(g_exp, x.data.shape).copy())]

    out._vjp = vjp
    return out


def tmean(x: Tensor, axis=None) -> Tensor:
    """Arithmetic mean over all elements or along one axis."""
    n = x.data.size if axis is None else x.data.shape[axis]
    return scale(tsum(x, axis), 1.0 / n)


def mean_of(tensors) -> Tensor:
    """Mean of a set of same-shape tensors (neighbor aggregation helper)."""
    tensors = [_wrap(t) for t in tensors]
    if not tensors:
        raise ShapeError("mean_of")
    shape = tensors[0].shape
    for t in tensors:
        if t.shape != shape:
            raise ShapeError("mean_of", *(x.shape for x in tensors))
    n = len(tensors)
    out = Tensor(sum(t.data for t in tensors) / n, tuple(tensors), "mean_of")

    def vjp(g):
        gn = g / n
        return [(t, gn) for t in tensors if t.requires_grad]

    out._vjp = vjp
    return out


def square(x: Tensor) -> Tensor:
    out = Tensor(x.data * x.data, (x,), "square")
    out._vjp = lambda g: [(x, 2.0 * x.data * g)] if x.requires_grad else []
    return out


def exp(x: Tensor) -> Tensor:
    out = Tensor(np.exp(x.data), (x,), "exp")
    out._vjp = lambda g: [(x, out.data * g)] if x.requires_grad else []
    return out


def log(x: Tensor) -> Tensor:
    out = Tensor(np.log(x.data), (x,), "log")
    out._vjp = lambda g: [(x, g / x.data)] if x.requires_grad else []
    return out


def sigmoid(x: Tensor) -> Tensor:
    """Numerically stable logistic function."""
    out = Tensor(expit(x.data), (x,), "sigmoid")
    out._vjp = lambda g: [(x, out.data * (1.0 - out.data) * g)] if x.requires_grad else []
    return out


def leaky_relu(x: Tensor, slope=0.01) -> Tensor:
    mask = x.data >= 0.0
    out = Tensor(np.where(mask, x.data, slope * x.data), (x,), "leaky_relu")
    out._vjp = lambda g: [(x, np.where(mask, 1.0, slope) * g)] if x.requires_grad else []
    return out


def scale(x: Tensor, c) -> Tensor:
    c = float(c)
    out = Tensor(x.data * c, (x,), "scale")
    out._vjp = lambda g: [(x, c * g)] if x.requires_grad else []
    return out


def add_const(x: Tensor, c) -> Tensor:
    out = Tensor(x.data + float(c), (x,), "add_const")
    out._vjp = lambda g: [(x, g)] if x.requires_grad else []
    return out


def l2norm(x: Tensor, axis=None) -> Tensor:
    """Euclidean norm over the whole array or per row (axis=1).

    At a zero vector the derivative does not exist; the zero subgradient
    is used there, which is the minimizing choice for penalty terms.
    """
    if axis is None:
        norm = np.sqrt((x.data * x.data).sum())
        out = Tensor(norm, (x,), "l2norm")

        def vjp(g):
            if not x.requires_grad:
                return []
            if norm == 0.0:
                return [(x, np.zeros_like(x.data))]
            return [(x, (float(g) / norm) * x.data)]

    elif axis == 1 and x.ndim == 2:
        norms = np.sqrt((x.data * x.data).sum(axis=1))
        out = Tensor(norms, (x,), "l2norm")

        def vjp(g):
            if not x.requires_grad:
                return []
            safe = np.where(norms == 0.0, 1.0, norms)
            gx = (g / safe)[:, None] * x.data
            gx[norms == 0.0] = 0.0
            return [(x, gx)]

    else:
        raise ShapeError("l2norm", x.shape)

    out._vjp = vjp
    return out


# ----------------------------------------------------------------------
# backward pass
# ----------------------------------------------------------------------

# ops whose vjp hands out the upstream gradient itself (or views of it)
# instead of freshly allocated arrays
_ALIASING_OPS = frozenset({"add", "sub", "add_const", "concat", "mean_of"})


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every ancestor of ``loss`` with d(loss)/d(node).

    The pass keeps its own gradient accumulator and only adds the result
    into each node's ``grad`` at the end of its visit, so running backward
    twice on the same record accumulates exactly twice the gradient.
    """
    if loss.data.shape != ():
        raise ShapeError("backward", loss.data.shape)

    # reverse creation order restricted to ancestors of the loss
    seen = set()
    nodes = []
    stack = [loss]
    while stack:
        t = stack.pop()
        if t._id in seen:
            continue
        seen.add(t._id)
        nodes.append(t)
        stack.extend(p for p in t.parents if p._id not in seen)
    nodes.sort(key=lambda t: t._id, reverse=True)

    # Pass-local accumulators.  Entries in `borrowed` may alias a vjp
    # output (ops in _ALIASING_OPS forward the upstream gradient or views
    # of it); they are copied before any in-place update or before being
    # handed to a node's grad slot.  Everything else is freshly allocated
    # by its vjp and can be donated without copying.
    pass_grads = {loss._id: np.ones(())}
    borrowed = set()
    for node in nodes:
        nid = node._id
        g = pass_grads.pop(nid, None)
        if g is None:
            continue  # not on a path to the loss
        if node._grad is None:
            if nid in borrowed:
                node._grad = np.array(g, dtype=np.float64, copy=True)
            else:
                node._grad = g
        else:
            np.add(node._grad, g, out=node._grad)
        borrowed.discard(nid)
        if node._vjp is None:
            continue
        aliasing = node.op in _ALIASING_OPS
        for parent, contrib in node._vjp(g):
            pid = parent._id
            acc = pass_grads.get(pid)
            if acc is None:
                pass_grads[pid] = contrib
                if aliasing:
                    borrowed.add(pid)
            else:
                if pid in borrowed:
                    acc = np.array(acc, dtype=np.float64, copy=True)
                    pass_grads[pid] = acc
                    borrowed.discard(pid)
                np.add(acc, contrib, out=acc)
