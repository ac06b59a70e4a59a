"""Reverse-mode automatic differentiation on float64 numpy arrays.

A Tensor wraps an ndarray value; operations executed inside a `tape()`
context record backward closures, and `backward()` replays them in reverse
to accumulate gradients into every reachable Tensor. Outside a tape the
same operations run value-only, which is what inference uses.

The LSTM recurrence is a single taped node with a hand-derived
backward-through-time pass; everything else is built from fine-grained
primitives. Correctness of both is enforced by the finite-difference
checker in `numeric`.
"""

import numpy as np
from scipy.special import expit

from .numeric import conv1d_same_forward

_TAPE = None


class Tensor:
    __slots__ = ("value", "grad", "_bw")

    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._bw = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class tape:
    """Context manager collecting backward closures for one forward pass."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        global _TAPE
        self._prev = _TAPE
        _TAPE = self.nodes
        return self

    def __exit__(self, exc_type, exc, tb):
        global _TAPE
        _TAPE = self._prev
        return False


def recording():
    return _TAPE is not None


def _push(out, bw):
    out._bw = bw
    _TAPE.append(out)


def _accum(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.value)
    t.grad += g


def backward(loss, t):
    """Propagate d(loss)/d(node) through every node recorded on tape t."""
    if loss.value.shape != ():
        raise ValueError("backward requires a scalar loss")
    loss.grad = np.ones(())
    for node in reversed(t.nodes):
        if node.grad is not None:
            node._bw(node.grad)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitives


def const(value):
    return Tensor(value)


def add(a, b):
    out = Tensor(a.value + b.value)
    if _TAPE is not None:
        def bw(g, a=a, b=b):
            _accum(a, _unbroadcast(g, a.value.shape))
            _accum(b, _unbroadcast(g, b.value.shape))
        _push(out, bw)
    return out


def sub(a, b):
    out = Tensor(a.value - b.value)
    if _TAPE is not None:
        def bw(g, a=a, b=b):
            _accum(a, _unbroadcast(g, a.value.shape))
            _accum(b, _unbroadcast(-g, b.value.shape))
        _push(out, bw)
    return out


def mul(a, b):
    out = Tensor(a.value * b.value)
    if _TAPE is not None:
        def bw(g, a=a, b=b):
            _accum(a, _unbroadcast(g * b.value, a.value.shape))
            _accum(b, _unbroadcast(g * a.value, b.value.shape))
        _push(out, bw)
    return out


def scale(a, c):
    out = Tensor(a.value * c)
    if _TAPE is not None:
        def bw(g, a=a, c=c):
            _accum(a, g * c)
        _push(out, bw)
    return out


def matmul(a, b):
    out = Tensor(a.value @ b.value)
    if _TAPE is not None:
        def bw(g, a=a, b=b):
            av, bv = a.value, b.value
            if av.ndim == 2 and bv.ndim == 2:
                _accum(a, g @ bv.T)
                _accum(b, av.T @ g)
            elif av.ndim == 1 and bv.ndim == 2:
                _accum(a, bv @ g)
                _accum(b, av[:, None] * g[None, :])
            elif av.ndim == 2 and bv.ndim == 1:
                _accum(a, g[:, None] * bv[None, :])
                _accum(b, av.T @ g)
            else:
                _accum(a, g * bv)
                _accum(b, g * av)
        _push(out, bw)
    return out


def tanh(a):
    out = Tensor(np.tanh(a.value))
    if _TAPE is not None:
        def bw(g, a=a, o=out):
            _accum(a, g * (1.0 - o.value * o.value))
        _push(out, bw)
    return out


def sigmoid(a):
    out = Tensor(expit(a.value))
    if _TAPE is not None:
        def bw(g, a=a, o=out):
            _accum(a, g * o.value * (1.0 - o.value))
        _push(out, bw)
    return out


def relu(a):
    out = Tensor(np.maximum(a.value, 0.0))
    if _TAPE is not None:
        def bw(g, a=a):
            _accum(a, g * (a.value > 0.0))
        _push(out, bw)
    return out


def softplus(a):
    out = Tensor(np.logaddexp(0.0, a.value))
    if _TAPE is not None:
        def bw(g, a=a):
            _accum(a, g * expit(a.value))
        _push(out, bw)
    return out


def softmax1d(a):
    e = np.exp(a.value - np.max(a.value))
    out = Tensor(e / np.sum(e))
    if _TAPE is not None:
        def bw(g, a=a, o=out):
            s = o.value
            _accum(a, s * (g - np.dot(g, s)))
        _push(out, bw)
    return out


def sum_all(a):
    out = Tensor(np.sum(a.value))
    if _TAPE is not None:
        def bw(g, a=a):
            _accum(a, np.broadcast_to(g, a.value.shape))
        _push(out, bw)
    return out


def concat1d(parts):
    parts = tuple(parts)
    out = Tensor(np.concatenate([p.value for p in parts]))
    if _TAPE is not None:
        def bw(g, parts=parts):
            pos = 0
            for p in parts:
                n = p.value.shape[0]
                _accum(p, g[pos:pos + n])
                pos += n
        _push(out, bw)
    return out


def slice1d(a, start, stop):
    out = Tensor(a.value[start:stop])
    if _TAPE is not None:
        def bw(g, a=a, start=start, stop=stop):
            if a.grad is None:
                a.grad = np.zeros_like(a.value)
            a.grad[start:stop] += g
        _push(out, bw)
    return out


def row(a, i):
    out = Tensor(a.value[i])
    if _TAPE is not None:
        def bw(g, a=a, i=i):
            if a.grad is None:
                a.grad = np.zeros_like(a.value)
            a.grad[i] += g
        _push(out, bw)
    return out


def stack(parts):
    """Stack 0-D or 1-D tensors along a new leading axis."""
    parts = tuple(parts)
    out = Tensor(np.stack([p.value for p in parts]))
    if _TAPE is not None:
        def bw(g, parts=parts):
            for i, p in enumerate(parts):
                _accum(p, g[i])
        _push(out, bw)
    return out


def transpose(a):
    out = Tensor(a.value.T)
    if _TAPE is not None:
        def bw(g, a=a):
            _accum(a, g.T)
        _push(out, bw)
    return out


def concat_cols(a, b):
    """Column-wise concatenation of two 2-D tensors with equal row counts."""
    out = Tensor(np.concatenate([a.value, b.value], axis=1))
    if _TAPE is not None:
        def bw(g, a=a, b=b):
            n = a.value.shape[1]
            _accum(a, g[:, :n])
            _accum(b, g[:, n:])
        _push(out, bw)
    return out


def slice_cols(a, start, stop):
    out = Tensor(a.value[:, start:stop])
    if _TAPE is not None:
        def bw(g, a=a, start=start, stop=stop):
            if a.grad is None:
                a.grad = np.zeros_like(a.value)
            a.grad[:, start:stop] += g
        _push(out, bw)
    return out


def column(a, j):
    out = Tensor(a.value[:, j])
    if _TAPE is not None:
        def bw(g, a=a, j=j):
            if a.grad is None:
                a.grad = np.zeros_like(a.value)
            a.grad[:, j] += g
        _push(out, bw)
    return out


def conv1d_same(x, kernel):
    """Taped same-length convolution; x is (N,) or (N, c), kernel (F, W[, c])."""
    out = Tensor(conv1d_same_forward(x.value, kernel.value))
    if _TAPE is not None:
        def bw(g, x=x, kernel=kernel):
            xv = x.value if x.value.ndim == 2 else x.value[:, None]
            kv = kernel.value if kernel.value.ndim == 3 else kernel.value[:, :, None]
            width = kv.shape[1]
            half = width // 2
            padded = np.concatenate(
                [np.zeros((half, xv.shape[1])), xv, np.zeros((half, xv.shape[1]))],
                axis=0,
            )
            windows = np.lib.stride_tricks.sliding_window_view(padded, width, axis=0)
            gk = np.einsum("nf,ncw->fwc", g, windows)
            # transposed convolution: correlate upstream grad with flipped kernel
            flipped = np.ascontiguousarray(kv[:, ::-1, :].transpose(2, 1, 0))
            gx = conv1d_same_forward(g, flipped)
            _accum(x, gx if x.value.ndim == 2 else gx[:, 0])
            _accum(kernel, gk if kernel.value.ndim == 3 else gk[:, :, 0])
        _push(out, bw)
    return out


# ---------------------------------------------------------------------------
# recurrent composite


def lstm_sequence(x, wx, wh, b, reverse=False):
    """Run an LSTM over a whole sequence as one taped node.

    x: (N, d_in); wx: (4H, d_in); wh: (4H, H); b: (4H,). Gate order is
    input, forget, cell, output. Returns (N, H) where row t is the hidden
    state at position t for the given direction (reverse=True runs from the
    end of the sequence back to the start). Initial hidden and cell states
    are zero.
    """
    xv, wxv, whv, bv = x.value, wx.value, wh.value, b.value
    n = xv.shape[0]
    hsize = whv.shape[1]
    order = range(n - 1, -1, -1) if reverse else range(n)
    pre_in = xv @ wxv.T + bv
    wh_t = whv.T

    gi = np.empty((n, hsize)); gf = np.empty((n, hsize))
    gg = np.empty((n, hsize)); go = np.empty((n, hsize))
    tc = np.empty((n, hsize)); c_prev = np.empty((n, hsize))
    h_prev = np.empty((n, hsize)); h_out = np.empty((n, hsize))

    h = np.zeros(hsize)
    c = np.zeros(hsize)
    for t in order:
        pre = pre_in[t] + h @ wh_t
        i = expit(pre[:hsize])
        f = expit(pre[hsize:2 * hsize])
        g_ = np.tanh(pre[2 * hsize:3 * hsize])
        o = expit(pre[3 * hsize:])
        h_prev[t] = h
        c_prev[t] = c
        c = f * c + i * g_
        t_c = np.tanh(c)
        h = o * t_c
        gi[t] = i; gf[t] = f; gg[t] = g_; go[t] = o; tc[t] = t_c
        h_out[t] = h

    out = Tensor(h_out)
    if _TAPE is not None:
        def bw(grad, x=x, wx=wx, wh=wh, b=b):
            dpre_all = np.empty((n, 4 * hsize))
            dh = np.zeros(hsize)
            dc = np.zeros(hsize)
            for t in reversed(order):
                dh = dh + grad[t]
                do = dh * tc[t]
                dc = dc + dh * go[t] * (1.0 - tc[t] * tc[t])
                di = dc * gg[t]
                dg = dc * gi[t]
                df = dc * c_prev[t]
                dpre = dpre_all[t]
                dpre[:hsize] = di * gi[t] * (1.0 - gi[t])
                dpre[hsize:2 * hsize] = df * gf[t] * (1.0 - gf[t])
                dpre[2 * hsize:3 * hsize] = dg * (1.0 - gg[t] * gg[t])
                dpre[3 * hsize:] = do * go[t] * (1.0 - go[t])
                dh = dpre @ whv
                dc = dc * gf[t]
            _accum(x, dpre_all @ wxv)
            _accum(wx, dpre_all.T @ xv)
            _accum(wh, dpre_all.T @ h_prev)
            _accum(b, dpre_all.sum(axis=0))
        _push(out, bw)
    return out
