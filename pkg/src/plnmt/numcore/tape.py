"""Reverse-mode differentiation over dense numpy arrays.

A :class:`Tape` records every operation of one forward pass.  Values are
batched arrays; the recurrent and attention primitives are fused ops with
hand-written backward rules so that an LSTM step costs one tape node.
"""
from __future__ import annotations

import numpy as np

from plnmt.errors import ContractError, DimensionError, NumericError
from plnmt.numcore.params import ParamStore


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, value, requires_grad=False, name=None):
        self.value = value
        self.grad = None
        self.parents = ()
        self.backward_fn = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.value.shape})"


def _sigmoid(z):
    # split on sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def sample_gumbel(rng, shape, dtype=np.float64):
    """Standard Gumbel(0, 1) noise ``-log(-log u)``."""
    u = rng.random(shape)
    tiny = np.finfo(np.float64).tiny
    return (-np.log(-np.log(u + tiny) + tiny)).astype(dtype)


class Tape:
    """Operation recorder for a single forward pass.

    ``train`` enables dropout; ``record=False`` skips graph bookkeeping for
    inference.  Randomness comes only from ``rng`` so that a fixed seed
    reproduces a forward pass exactly.
    """

    def __init__(self, params: ParamStore, train: bool = False, rng=None, record: bool = True):
        self.params = params
        self.train = train
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.record = record
        self.dtype = params.dtype
        self.nodes: list[Tensor] = []
        self._leaves: dict[str, Tensor] = {}
        self._done = False

    # ------------------------------------------------------------------ plumbing

    def _make(self, value, parents, backward_fn):
        out = Tensor(value)
        if self.record and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out.parents = parents
            out.backward_fn = backward_fn
            self.nodes.append(out)
        return out

    def param(self, name: str) -> Tensor:
        leaf = self._leaves.get(name)
        if leaf is None:
            if name not in self.params:
                raise ContractError(f"unknown parameter {name!r}")
            leaf = Tensor(self.params[name], requires_grad=self.record, name=name)
            self._leaves[name] = leaf
        return leaf

    def const(self, value, dtype=None) -> Tensor:
        return Tensor(np.asarray(value, dtype=dtype or self.dtype))

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        """Gradients of the scalar ``loss`` for every parameter in the store.

        Untouched parameters map to zero arrays.
        """
        if not self.record:
            raise ContractError("tape was created with record=False")
        if loss.value.shape not in ((), (1,)):
            raise ContractError(f"backward needs a scalar loss, got shape {loss.value.shape}")
        if self._done:
            raise ContractError("backward already ran on this tape")
        self._done = True
        if loss.requires_grad:
            loss.grad = np.ones_like(loss.value)
            for node in reversed(self.nodes):
                if node.grad is None:
                    continue
                grads = node.backward_fn(node.grad)
                for parent, g in zip(node.parents, grads):
                    if g is None or not parent.requires_grad:
                        continue
                    parent.grad = g if parent.grad is None else parent.grad + g
                # intermediate gradients are no longer needed
                node.grad = None
        out = {}
        for name, value in self.params.items():
            leaf = self._leaves.get(name)
            if leaf is not None and leaf.grad is not None:
                out[name] = np.asarray(leaf.grad, dtype=self.dtype).reshape(value.shape)
            else:
                out[name] = np.zeros_like(value)
        return out

    # ------------------------------------------------------------------ elementwise

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        return self._make(a.value + b.value, (a, b), lambda g: (g, g))

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        return self._make(a.value - b.value, (a, b), lambda g: (g, -g))

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        av, bv = a.value, b.value
        return self._make(av * bv, (a, b), lambda g: (g * bv, g * av))

    def scale(self, a: Tensor, factor: float) -> Tensor:
        return self._make(a.value * factor, (a,), lambda g: (g * factor,))

    def tanh(self, a: Tensor) -> Tensor:
        y = np.tanh(a.value)
        return self._make(y, (a,), lambda g: (g * (1.0 - y * y),))

    def sigmoid(self, a: Tensor) -> Tensor:
        y = _sigmoid(a.value)
        return self._make(y, (a,), lambda g: (g * y * (1.0 - y),))

    def sum(self, a: Tensor) -> Tensor:
        shape = a.value.shape
        return self._make(np.asarray(a.value.sum()), (a,),
                          lambda g: (np.broadcast_to(g, shape).copy(),))

    def dropout(self, a: Tensor, rate: float) -> Tensor:
        """Inverted dropout; identity outside training or at rate 0."""
        if not self.train or rate <= 0.0:
            return a
        keep = (self.rng.random(a.value.shape) >= rate).astype(a.value.dtype) / (1.0 - rate)
        return self._make(a.value * keep, (a,), lambda g: (g * keep,))

    # ------------------------------------------------------------------ shape ops

    def concat(self, parts: list[Tensor], axis: int = -1) -> Tensor:
        values = [p.value for p in parts]
        value = np.concatenate(values, axis=axis)
        bounds = np.cumsum([v.shape[axis] for v in values])[:-1]

        def backward(g):
            return tuple(np.split(g, bounds, axis=axis))

        return self._make(value, tuple(parts), backward)

    def slice(self, a: Tensor, start: int, stop: int) -> Tensor:
        """Slice along the last axis."""
        shape = a.value.shape

        def backward(g):
            full = np.zeros(shape, dtype=g.dtype)
            full[..., start:stop] = g
            return (full,)

        return self._make(a.value[..., start:stop], (a,), backward)

    def reshape(self, a: Tensor, shape) -> Tensor:
        old = a.value.shape
        return self._make(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))

    def stack(self, parts: list[Tensor], axis: int = 1) -> Tensor:
        value = np.stack([p.value for p in parts], axis=axis)

        def backward(g):
            return tuple(np.moveaxis(g, axis, 0))

        return self._make(value, tuple(parts), backward)

    # ------------------------------------------------------------------ layers

    def affine(self, x: Tensor, name: str) -> Tensor:
        """``x @ W.T + b`` with ``W = name.W`` of shape (out, in)."""
        W = self.param(name + ".W")
        b = self.param(name + ".b")
        if x.value.shape[-1] != W.value.shape[1]:
            raise DimensionError(
                f"{name}.W expects input dimension {W.value.shape[1]}, got {x.value.shape[-1]}")
        xv, Wv = x.value, W.value

        def backward(g):
            g2 = g.reshape(-1, g.shape[-1])
            x2 = xv.reshape(-1, xv.shape[-1])
            return g @ Wv, g2.T @ x2, g2.sum(axis=0)

        return self._make(xv @ Wv.T + b.value, (x, W, b), backward)

    def embed(self, ids, name: str) -> Tensor:
        table = self.param(name)
        ids = np.asarray(ids, dtype=np.int64)
        Tv = table.value
        if ids.size and (ids.min() < 0 or ids.max() >= Tv.shape[0]):
            raise IndexError(f"{name}: id out of range [0, {Tv.shape[0]})")

        def backward(g):
            full = np.zeros_like(Tv)
            np.add.at(full, ids.ravel(), g.reshape(-1, Tv.shape[1]))
            return (full,)

        return self._make(Tv[ids], (table,), backward)

    def lstm_cell(self, x: Tensor, h: Tensor, c: Tensor, name: str, keep=None):
        """One LSTM step; returns ``(h', c')``.

        ``keep`` is an optional (batch,) 0/1 array: rows with 0 carry the
        previous state through unchanged (used for padded positions).
        """
        W = self.param(name + ".W")
        b = self.param(name + ".b")
        xv, hv, cv, Wv = x.value, h.value, c.value, W.value
        H = hv.shape[-1]
        if Wv.shape[0] != 4 * H or Wv.shape[1] != xv.shape[-1] + H:
            raise DimensionError(
                f"{name}.W has shape {Wv.shape}, incompatible with input {xv.shape[-1]} "
                f"and hidden {H}")
        if not np.isfinite(xv).all():
            raise NumericError(f"{name}: non-finite LSTM input")
        xh = np.concatenate([xv, hv], axis=-1)
        z = xh @ Wv.T + b.value
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        gc = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c_new = f * cv + i * gc
        tc = np.tanh(c_new)
        h_new = o * tc
        if keep is not None:
            m = np.asarray(keep, dtype=xv.dtype).reshape(-1, 1)
            h_out = m * h_new + (1.0 - m) * hv
            c_out = m * c_new + (1.0 - m) * cv
        else:
            m = None
            h_out, c_out = h_new, c_new
        n_in = xv.shape[-1]

        def backward(g):
            gh, gc_out = g[:, :H], g[:, H:]
            if m is not None:
                gh_new, gc_new = gh * m, gc_out * m
                pass_h, pass_c = gh * (1.0 - m), gc_out * (1.0 - m)
            else:
                gh_new, gc_new = gh, gc_out
                pass_h = pass_c = 0.0
            dc = gc_new + gh_new * o * (1.0 - tc * tc)
            dz = np.concatenate([
                dc * gc * i * (1.0 - i),
                dc * cv * f * (1.0 - f),
                dc * i * (1.0 - gc * gc),
                gh_new * tc * o * (1.0 - o),
            ], axis=-1)
            dxh = dz @ Wv
            return (dxh[:, :n_in], dxh[:, n_in:] + pass_h, dc * f + pass_c,
                    dz.T @ xh, dz.sum(axis=0))

        hc = self._make(np.concatenate([h_out, c_out], axis=-1), (x, h, c, W, b), backward)
        return self.slice(hc, 0, H), self.slice(hc, H, 2 * H)

    def masked_mean(self, x: Tensor, mask) -> Tensor:
        """Mean over axis 1 of a (batch, time, dim) tensor, ignoring masked steps."""
        m = np.asarray(mask, dtype=x.value.dtype)
        count = m.sum(axis=1, keepdims=True)
        w = (m / count)[..., None]
        return self._make((x.value * w).sum(axis=1), (x,), lambda g: (g[:, None, :] * w,))

    def attention(self, query: Tensor, keys: Tensor, values: Tensor, mask=None):
        """Scaled dot-product attention for a single query per batch row.

        Returns ``(context, weights)``; weights are a plain array.
        """
        q, K, V = query.value, keys.value, values.value
        scale = 1.0 / np.sqrt(q.shape[-1])
        scores = np.einsum("ba,bsa->bs", q, K) * scale
        if mask is not None:
            scores = np.where(np.asarray(mask, dtype=bool), scores, -1e30)
        w = softmax(scores, axis=-1)
        ctx = np.einsum("bs,bsd->bd", w, V)

        def backward(g):
            dw = np.einsum("bd,bsd->bs", g, V)
            ds = w * (dw - (w * dw).sum(axis=-1, keepdims=True))
            dq = np.einsum("bs,bsa->ba", ds, K) * scale
            dK = ds[..., None] * q[:, None, :] * scale
            dV = w[..., None] * g[:, None, :]
            return dq, dK, dV

        return self._make(ctx, (query, keys, values), backward), w

    def gumbel_softmax(self, logits: Tensor, tau: float, hard: bool = False, noise=None) -> Tensor:
        """Relaxed categorical sample over the last axis.

        With ``hard`` the forward value is the exact one-hot of the argmax while
        the backward pass uses the soft sample's Jacobian (straight-through).
        """
        if not tau > 0:
            raise ContractError(f"Gumbel-Softmax temperature must be positive, got {tau}")
        lv = logits.value
        if noise is None:
            noise = sample_gumbel(self.rng, lv.shape, lv.dtype)
        y = softmax((lv + noise) / tau, axis=-1)
        if hard:
            value = np.zeros_like(y)
            np.put_along_axis(value, y.argmax(axis=-1)[..., None], 1.0, axis=-1)
        else:
            value = y

        def backward(g):
            return (y * (g - (y * g).sum(axis=-1, keepdims=True)) / tau,)

        return self._make(value, (logits,), backward)

    def cross_entropy(self, logits: Tensor, targets, weights) -> Tensor:
        """Weighted sum of token cross-entropies: ``sum(w * -log p[target])``.

        ``logits`` is (..., V); ``targets`` and ``weights`` share the leading shape.
        """
        lv = logits.value
        V = lv.shape[-1]
        flat = lv.reshape(-1, V)
        t = np.asarray(targets, dtype=np.int64).ravel()
        w = np.asarray(weights, dtype=lv.dtype).ravel()
        if t.size and (t.min() < 0 or t.max() >= V):
            raise IndexError(f"target id out of range [0, {V})")
        logp = log_softmax(flat, axis=-1)
        rows = np.arange(t.size)
        loss = -(w * logp[rows, t]).sum()

        def backward(g):
            d = np.exp(logp)
            d[rows, t] -= 1.0
            return ((d * (w * g)[:, None]).reshape(lv.shape),)

        return self._make(np.asarray(loss, dtype=lv.dtype), (logits,), backward)

    def softmax_xent(self, logits: Tensor, target: int) -> Tensor:
        """``-log softmax(logits)[target]`` for a rank-1 logit vector."""
        if logits.value.ndim != 1:
            raise DimensionError(f"softmax_xent expects rank-1 logits, got {logits.value.shape}")
        V = logits.value.shape[0]
        if not 0 <= int(target) < V:
            raise IndexError(f"target {target} out of range [0, {V})")
        return self.cross_entropy(logits, [int(target)], [1.0])
