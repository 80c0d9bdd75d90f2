"""Graph layers with forward passes and analytic backpropagation.

Every layer works on dense float64 arrays. Weights right-multiply
(features in rows), no layer carries a bias term: propagation follows the
renormalized-adjacency form, so each layer is activation(P @ H @ W) for a
layer-specific propagation P.
"""

from __future__ import annotations

import numpy as np

from .ops import glorot, leaky_relu, relu, segment_softmax, segment_starts

ATTENTION_SLOPE = 0.2
LOG_CLAMP = 1e-12


class Param:
    """A weight array with its gradient and Adam moment buffers."""

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)
        self.m = np.zeros_like(value)
        self.v = np.zeros_like(value)

    def zero_grad(self):
        self.grad[...] = 0.0


def _validate_matmul(h: np.ndarray, w: np.ndarray) -> None:
    if h.ndim != 2 or w.ndim != 2 or h.shape[1] != w.shape[0]:
        raise ValueError(f"shape mismatch: {h.shape} @ {w.shape}")


def gcn_forward(h, a_norm, w, activation: str = "relu") -> np.ndarray:
    """Renormalized propagation: activation(A_norm @ H @ W)."""
    h = np.asarray(h, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    a_norm = np.asarray(a_norm, dtype=np.float64)
    _validate_matmul(h, w)
    if a_norm.shape != (h.shape[0], h.shape[0]):
        raise ValueError(f"propagation shape {a_norm.shape} does not match {h.shape}")
    z = a_norm @ h @ w
    return relu(z) if activation == "relu" else z


def sage_forward(h, neighbor_lists, w_self, w_neigh) -> np.ndarray:
    """ReLU(H @ W_self + mean-of-neighbors(H) @ W_neigh).

    A node with no neighbors aggregates a zero vector.
    """
    h = np.asarray(h, dtype=np.float64)
    w_self = np.asarray(w_self, dtype=np.float64)
    w_neigh = np.asarray(w_neigh, dtype=np.float64)
    _validate_matmul(h, w_self)
    _validate_matmul(h, w_neigh)
    agg = np.zeros_like(h)
    for i, nbrs in enumerate(neighbor_lists):
        if len(nbrs):
            agg[i] = h[list(nbrs)].mean(axis=0)
    return relu(h @ w_self + agg @ w_neigh)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_loss(pred_probs, true_labels, mask) -> float:
    """Mean negative log-likelihood over masked nodes, log clamped at 1e-12."""
    probs = np.asarray(pred_probs, dtype=np.float64)
    labels = np.asarray(true_labels)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty mask")
    rows = probs[mask]
    sums = rows.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise ValueError("masked prediction rows must sum to 1")
    picked = rows[np.arange(rows.shape[0]), labels[mask]]
    return float(-np.log(np.maximum(picked, LOG_CLAMP)).mean())


class GraphConvLayer:
    """Eq-1-form layer: activation(A_norm @ H @ W)."""

    def __init__(self, rng, d_in: int, d_out: int, activation: str):
        self.w = Param(glorot(rng, d_in, d_out))
        self.activation = activation
        self._cache = None

    def bind(self, a_norm: np.ndarray):
        self.a_norm = a_norm

    def forward(self, h: np.ndarray) -> np.ndarray:
        ph = self.a_norm @ h
        z = ph @ self.w.value
        out = relu(z) if self.activation == "relu" else z
        self._cache = (ph, z)
        return out

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        ph, z = self._cache
        dz = d_out * (z > 0) if self.activation == "relu" else d_out
        self.w.grad += ph.T @ dz
        return self.a_norm.T @ (dz @ self.w.value.T)

    def params(self) -> list[Param]:
        return [self.w]


class DenseLayer:
    """Plain activation(H @ W); the graph-free baseline layer."""

    def __init__(self, rng, d_in: int, d_out: int, activation: str):
        self.w = Param(glorot(rng, d_in, d_out))
        self.activation = activation
        self._cache = None

    def bind(self, a_norm: np.ndarray):
        pass

    def forward(self, h: np.ndarray) -> np.ndarray:
        z = h @ self.w.value
        out = relu(z) if self.activation == "relu" else z
        self._cache = (h, z)
        return out

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        h, z = self._cache
        dz = d_out * (z > 0) if self.activation == "relu" else d_out
        self.w.grad += h.T @ dz
        return dz @ self.w.value.T

    def params(self) -> list[Param]:
        return [self.w]


class NeighborMeanLayer:
    """Self and mean-neighbor transforms summed, then ReLU."""

    def __init__(self, rng, d_in: int, d_out: int, activation: str):
        self.w_self = Param(glorot(rng, d_in, d_out))
        self.w_neigh = Param(glorot(rng, d_in, d_out))
        self.activation = activation
        self._cache = None

    def bind(self, mean_mat: np.ndarray):
        # row-stochastic over neighborhoods; all-zero row when isolated
        self.mean_mat = mean_mat

    def forward(self, h: np.ndarray) -> np.ndarray:
        agg = self.mean_mat @ h
        z = h @ self.w_self.value + agg @ self.w_neigh.value
        out = relu(z) if self.activation == "relu" else z
        self._cache = (h, agg, z)
        return out

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        h, agg, z = self._cache
        dz = d_out * (z > 0) if self.activation == "relu" else d_out
        self.w_self.grad += h.T @ dz
        self.w_neigh.grad += agg.T @ dz
        d_agg = dz @ self.w_neigh.value.T
        return dz @ self.w_self.value.T + self.mean_mat.T @ d_agg

    def params(self) -> list[Param]:
        return [self.w_self, self.w_neigh]


class AttentionLayer:
    """Multi-head attention over neighborhoods with self-loops.

    Per head: e_ij = LeakyReLU(a_left . (W h_i) + a_right . (W h_j)),
    softmax over each aggregating node's neighborhood, weighted sum of
    transformed neighbor features. Heads are concatenated on hidden layers
    and averaged on the output layer.
    """

    def __init__(self, rng, d_in: int, d_out: int, heads: int, activation: str,
                 reduce: str):
        if reduce == "concat":
            if d_out % heads:
                raise ValueError(f"width {d_out} not divisible by {heads} heads")
            per_head = d_out // heads
        else:
            per_head = d_out
        self.heads = heads
        self.per_head = per_head
        self.reduce = reduce
        self.activation = activation
        self.w = Param(glorot(rng, d_in, heads * per_head))
        self.a_left = Param(glorot(rng, heads, per_head))
        self.a_right = Param(glorot(rng, heads, per_head))
        self._cache = None

    def bind(self, edges: tuple[np.ndarray, np.ndarray, int]):
        """Directed edge arrays (dst, src, n) sorted by (dst, src), self-loops in."""
        dst, src, n = edges
        starts, seg_ids = segment_starts(dst)
        if seg_ids.size != n or not np.array_equal(seg_ids, np.arange(n)):
            missing = sorted(set(range(n)) - set(seg_ids.tolist()))
            raise ValueError(f"nodes without incident edges or self-loop: {missing}")
        self.dst, self.src, self.starts = dst, src, starts

    def forward(self, h: np.ndarray) -> np.ndarray:
        n = h.shape[0]
        hh = self.heads
        k = self.per_head
        p = (h @ self.w.value).reshape(n, hh, k)  # (n, heads, k)
        el = (p * self.a_left.value[None]).sum(axis=2)  # (n, heads)
        er = (p * self.a_right.value[None]).sum(axis=2)
        s = el[self.dst] + er[self.src]  # (m, heads)
        t = leaky_relu(s, ATTENTION_SLOPE)
        alpha = segment_softmax(t, self.starts)  # (m, heads)
        weighted = alpha[:, :, None] * p[self.src]  # (m, heads, k)
        out_heads = np.add.reduceat(weighted, self.starts, axis=0)  # (n, heads, k)
        if self.reduce == "concat":
            z = out_heads.reshape(n, hh * k)
        else:
            z = out_heads.mean(axis=1)
        out = relu(z) if self.activation == "relu" else z
        self._cache = (h, p, s, alpha, z)
        return out

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        h, p, s, alpha, z = self._cache
        n = h.shape[0]
        hh, k = self.heads, self.per_head
        dz = d_out * (z > 0) if self.activation == "relu" else d_out
        if self.reduce == "concat":
            d_heads = dz.reshape(n, hh, k)
        else:
            d_heads = np.repeat(dz[:, None, :], hh, axis=1) / hh

        d_dst = d_heads[self.dst]  # (m, heads, k)
        d_alpha = (d_dst * p[self.src]).sum(axis=2)  # (m, heads)
        dp = np.zeros_like(p)
        np.add.at(dp, self.src, alpha[:, :, None] * d_dst)

        seg_dot = np.add.reduceat(alpha * d_alpha, self.starts, axis=0)  # (n, heads)
        dt = alpha * (d_alpha - seg_dot[self.dst])
        ds = dt * np.where(s >= 0, 1.0, ATTENTION_SLOPE)

        del_ = np.add.reduceat(ds, self.starts, axis=0)  # (n, heads)
        der = np.zeros((n, hh))
        np.add.at(der, self.src, ds)

        self.a_left.grad += (del_[:, :, None] * p).sum(axis=0)
        self.a_right.grad += (der[:, :, None] * p).sum(axis=0)
        dp += del_[:, :, None] * self.a_left.value[None]
        dp += der[:, :, None] * self.a_right.value[None]

        dp_flat = dp.reshape(n, hh * k)
        self.w.grad += h.T @ dp_flat
        return dp_flat @ self.w.value.T

    def params(self) -> list[Param]:
        return [self.w, self.a_left, self.a_right]


def gat_forward(h, edges, w, a_left, a_right, heads: int = 1,
                reduce: str = "concat", activation: str = "identity") -> np.ndarray:
    """Functional attention layer built from explicit parameter arrays."""
    h = np.asarray(h, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    layer = AttentionLayer.__new__(AttentionLayer)
    layer.heads = heads
    layer.per_head = w.shape[1] // heads
    layer.reduce = reduce
    layer.activation = activation
    layer.w = Param(w)
    layer.a_left = Param(np.asarray(a_left, dtype=np.float64).reshape(heads, -1))
    layer.a_right = Param(np.asarray(a_right, dtype=np.float64).reshape(heads, -1))
    layer.bind(edges)
    return layer.forward(h)


def attention_coefficients(layer: AttentionLayer, h: np.ndarray) -> np.ndarray:
    """The (m, heads) attention weights the layer would use on h."""
    layer.forward(np.asarray(h, dtype=np.float64))
    return layer._cache[3]


def softmax_cross_entropy_backward(probs, labels, mask) -> np.ndarray:
    """d(loss)/d(logits) for mean CE over the mask; zero off-mask."""
    mask = np.asarray(mask, dtype=bool)
    m = int(mask.sum())
    if m == 0:
        raise ValueError("empty mask")
    d = np.zeros_like(probs)
    idx = np.flatnonzero(mask)
    d[idx] = probs[idx]
    d[idx, labels[idx]] -= 1.0
    d[idx] /= m
    return d
