"""Dense-tensor reverse-mode automatic differentiation on numpy arrays.

A Tape records operations in execution order (which is already a topological
order: an op can only consume tensors that exist). backward() replays the
node list once, in reverse, accumulating gradients into Tensor.grad buffers.

Training arithmetic is float32; gradient checking runs the same graph in
float64. Reductions use numpy's fixed sequential semantics, so forward and
backward passes are bit-deterministic for fixed inputs.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NumericError, ParameterError, ShapeError

DEFAULT_DTYPE = np.float32

_ACTIVE_TAPE: Optional["Tape"] = None


class Tensor:
    """A numpy array plus an optional gradient buffer.

    Values are immutable once produced by an op; only optimizer steps touch
    `data` in place (outside any tape).
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        # always copy on first write: backward rules may hand back aliased views
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype)
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # arithmetic sugar; every dunder routes through the op functions below
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -np.asarray(other))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


class Node:
    """One recorded operation: inputs, output, and its backward rule."""

    __slots__ = ("inputs", "output", "backward_fn", "name")

    def __init__(self, inputs: Sequence[Tensor], output: Tensor,
                 backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
                 name: str = ""):
        self.inputs = tuple(inputs)
        self.output = output
        self.backward_fn = backward_fn
        self.name = name


class Tape:
    """Execution-ordered operation record; context manager activates it."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise ParameterError("nested tapes are not supported")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def backward(self, loss: Tensor, check_finite: bool = False):
        """Seed d(loss)/d(loss)=1 and propagate through every node once.

        The training loop leaves check_finite off and instead validates the
        (scalar) global gradient norm, which is NaN/Inf whenever any gradient
        is; gradient checking turns the per-op check on.
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {tuple(loss.shape)}")
        loss.grad = np.ones_like(loss.data)
        seen = set()
        for node in reversed(self.nodes):
            if id(node) in seen:
                raise NumericError("tape node visited twice")
            seen.add(id(node))
            out_grad = node.output.grad
            if out_grad is None:
                continue
            in_grads = node.backward_fn(out_grad)
            for t, g in zip(node.inputs, in_grads):
                if g is None or not t.requires_grad:
                    continue
                t.accumulate_grad(g)
        if check_finite:
            for node in self.nodes:
                for t in node.inputs:
                    if t.requires_grad and t.grad is not None and not np.all(np.isfinite(t.grad)):
                        raise NumericError(f"non-finite gradient in op '{node.name}'")


def _record(inputs, output, backward_fn, name):
    tape = _ACTIVE_TAPE
    if tape is not None and any(isinstance(t, Tensor) and t.requires_grad for t in inputs):
        output.requires_grad = True
        tape.nodes.append(Node([t for t in inputs if isinstance(t, Tensor)], output, backward_fn, name))
    return output


def _as_tensor(x, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else DEFAULT_DTYPE
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    out = Tensor(a.data + b.data)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record((a, b), out, backward, "add")


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    out = Tensor(a.data * b.data)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record((a, b), out, backward, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul inner dimensions disagree: {tuple(a.shape)} @ {tuple(b.shape)}")
    out = Tensor(np.matmul(a.data, b.data))

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record((a, b), out, backward, "matmul")


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    out = Tensor(a.data.reshape(shape))

    def backward(g):
        return (g.reshape(old),)

    return _record((a,), out, backward, "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor(a.data.transpose(axes))

    def backward(g):
        return (g.transpose(inv),)

    return _record((a,), out, backward, "transpose")


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.data.dtype, copy=False),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, a.shape).astype(a.data.dtype, copy=False),)

    return _record((a,), out, backward, "sum")


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    count = a.data.size if axis is None else np.prod([a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def _logistic(d: np.ndarray) -> np.ndarray:
    # saturation-safe: clip keeps exp in range, sigmoid already flat out there
    return 1.0 / (1.0 + np.exp(-np.clip(d, -60.0, 60.0)))


def sigmoid(x: Tensor) -> Tensor:
    y = _logistic(x.data)
    out = Tensor(y)

    def backward(g):
        return (g * y * (1.0 - y),)

    return _record((x,), out, backward, "sigmoid")


def silu(x: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    d = x.data
    s = _logistic(d)
    out = Tensor(d * s)

    def backward(g):
        return (g * (s * (1.0 + d * (1.0 - s))),)

    return _record((x,), out, backward, "silu")


def softplus(x: Tensor) -> Tensor:
    d = x.data
    y = (np.logaddexp(0.0, d)).astype(d.dtype, copy=False)
    out = Tensor(y)

    def backward(g):
        return (g * _logistic(d),)

    return _record((x,), out, backward, "softplus")


def texp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    out = Tensor(y)

    def backward(g):
        return (g * y,)

    return _record((x,), out, backward, "exp")


def tlog(x: Tensor) -> Tensor:
    out = Tensor(np.log(x.data))

    def backward(g):
        return (g / x.data,)

    return _record((x,), out, backward, "log")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stabilized by max subtraction along the reduced axis."""
    d = x.data
    m = d.max(axis=axis, keepdims=True)
    e = np.exp(d - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _record((x,), out, backward, "softmax")


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """y = x @ w + b over the trailing feature axis."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input shape {tuple(x.shape)} does not match weight shape {tuple(w.shape)}")
    y = matmul(x, w)
    if b is not None:
        if b.shape[-1] != w.shape[-1]:
            raise ShapeError(f"linear: bias shape {tuple(b.shape)} does not match weight shape {tuple(w.shape)}")
        y = add(y, b)
    return y


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    d = x.data
    mu = d.mean(axis=-1, keepdims=True)
    var = d.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (d - mu) * inv
    out = Tensor(xhat * gamma.data + beta.data)
    n = d.shape[-1]

    def backward(g):
        dxhat = g * gamma.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        red = tuple(range(d.ndim - 1))
        dgamma = (g * xhat).sum(axis=red)
        dbeta = g.sum(axis=red)
        return dx.astype(d.dtype, copy=False), dgamma, dbeta

    return _record((x, gamma, beta), out, backward, "layer_norm")


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------

_UNFOLD_CACHE: dict = {}


def _unfold_matrix(hh: int, ww: int, dl: int, dtype) -> np.ndarray:
    """0/1 matrix mapping padded pixels to (position, tap) patch rows.

    Row (i*ww + j)*9 + a*3 + b selects padded pixel (i + a*dl, j + b*dl);
    out-of-range taps for interior-only... padding guarantees validity.
    """
    key = (hh, ww, dl, np.dtype(dtype).str)
    cached = _UNFOLD_CACHE.get(key)
    if cached is not None:
        return cached
    hp, wp = hh + 2 * dl, ww + 2 * dl
    u = np.zeros((hh * ww * 9, hp * wp), dtype=dtype)
    r = 0
    for i in range(hh):
        for j in range(ww):
            for a in range(3):
                for b in range(3):
                    u[r, (i + a * dl) * wp + (j + b * dl)] = 1.0
                    r += 1
    _UNFOLD_CACHE[key] = u
    return u


def conv2d_dilated(x: Tensor, kernels: Tensor, dilation: int = 1, bias: Optional[Tensor] = None) -> Tensor:
    """3x3 dilated cross-correlation with zero padding of size `dilation`.

    Accepts [C,H,W] or batched [B,C,H,W] input; spatial size is preserved.
    Grids here are small, so patch extraction is a dense unfold matmul.
    """
    if dilation < 1:
        raise ParameterError(f"dilation must be >= 1, got {dilation}")
    squeeze = x.ndim == 3
    xdata = x.data.reshape((1,) + tuple(x.shape)) if squeeze else x.data
    if kernels.ndim != 4 or kernels.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d_dilated expects kernels [C_out, C_in, 3, 3], got {tuple(kernels.shape)}")
    if xdata.shape[1] != kernels.shape[1]:
        raise ShapeError(f"conv2d_dilated: input shape {tuple(x.shape)} does not match kernels {tuple(kernels.shape)}")
    bsz, cin, hh, ww = xdata.shape
    cout = kernels.shape[0]
    dl = dilation
    hp, wp = hh + 2 * dl, ww + 2 * dl
    xp = np.zeros((bsz, cin, hp, wp), dtype=xdata.dtype)
    xp[:, :, dl:dl + hh, dl:dl + ww] = xdata
    kd = kernels.data
    xflat = xp.transpose(0, 2, 3, 1).reshape(bsz, hp * wp, cin)
    unfold = _unfold_matrix(hh, ww, dl, xdata.dtype)
    pmat = np.matmul(unfold, xflat).reshape(bsz, hh * ww, 9 * cin)
    kmat = kd.transpose(2, 3, 1, 0).reshape(9 * cin, cout)
    y = np.matmul(pmat, kmat)
    if bias is not None:
        y = y + bias.data
    y = np.ascontiguousarray(y.transpose(0, 2, 1)).reshape(bsz, cout, hh, ww)
    out = Tensor(y[0] if squeeze else y)

    def backward(g):
        g = g.reshape(bsz, cout, hh * ww).transpose(0, 2, 1)        # [B, HW, O]
        dkmat = np.tensordot(pmat, g, axes=([0, 1], [0, 1]))        # [9C, O]
        dk = dkmat.reshape(3, 3, cin, cout).transpose(3, 2, 0, 1)
        dpatch = np.matmul(g, kmat.T).reshape(bsz, hh * ww * 9, cin)
        dxflat = np.matmul(unfold.T, dpatch)                        # [B, HpWp, C]
        dx = dxflat.reshape(bsz, hp, wp, cin).transpose(0, 3, 1, 2)[:, :, dl:dl + hh, dl:dl + ww]
        grads = [dx.reshape(x.shape) if squeeze else np.ascontiguousarray(dx), dk]
        if bias is not None:
            grads.append(g.sum(axis=(0, 1)))
        return grads

    inputs = (x, kernels) if bias is None else (x, kernels, bias)
    return _record(inputs, out, backward, "conv2d_dilated")


def depthwise_conv1d_causal(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Per-channel causal 1-D convolution along axis 1 of [B, L, E] input.

    weight is [E, K]; output position t sees inputs t-K+1 .. t (left zero pad).
    """
    bsz, ln, ch = x.shape
    if weight.shape[0] != ch:
        raise ShapeError(f"depthwise conv: input shape {tuple(x.shape)} does not match weight shape {tuple(weight.shape)}")
    k = weight.shape[1]
    xp = np.zeros((bsz, ln + k - 1, ch), dtype=x.data.dtype)
    xp[:, k - 1:, :] = x.data
    wd = weight.data
    y = np.zeros_like(x.data)
    for j in range(k):
        y += xp[:, j:j + ln, :] * wd[:, j]
    if bias is not None:
        y = y + bias.data
    out = Tensor(y)

    def backward(g):
        dxp = np.zeros_like(xp)
        dw = np.zeros_like(wd)
        for j in range(k):
            dw[:, j] = (g * xp[:, j:j + ln, :]).sum(axis=(0, 1))
            dxp[:, j:j + ln, :] += g * wd[:, j]
        grads = [dxp[:, k - 1:, :], dw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 1)))
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _record(inputs, out, backward, "depthwise_conv1d")


# ---------------------------------------------------------------------------
# attention and selective scan
# ---------------------------------------------------------------------------

ATTENTION_MASK_PENALTY = -1e9


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor,
                                 mask: Optional[np.ndarray] = None,
                                 return_weights: bool = False):
    """softmax(q kᵀ / sqrt(d_h) + mask penalty) v over the last two axes.

    Leading axes (heads, batch) broadcast; mask is boolean [n, n] with True
    marking disallowed pairs (additive -1e9 before the softmax). Long
    sequences in inference mode run head-by-head: same arithmetic per element,
    but the n x n score matrix stays cache-resident.
    """
    n = q.shape[-2]
    if n == 0:
        raise ShapeError("attention over an empty sequence (n=0)")
    dh = q.shape[-1]
    if (_ACTIVE_TAPE is None and not return_weights and n >= 512 and q.ndim > 2):
        lead = int(np.prod(q.shape[:-2]))
        qf = q.data.reshape(lead, n, dh)
        kf = k.data.reshape(lead, n, dh)
        vf = v.data.reshape(lead, n, dh)
        penalty = None
        if mask is not None:
            penalty = np.where(np.asarray(mask, dtype=bool),
                               ATTENTION_MASK_PENALTY, 0.0).astype(qf.dtype)
        out = np.empty_like(qf)
        scale = 1.0 / math.sqrt(dh)
        block = 256  # query-row tiles keep the score matrix cache-resident
        for i in range(lead):
            kt = kf[i].T
            for r0 in range(0, n, block):
                r1 = min(r0 + block, n)
                s = (qf[i, r0:r1] @ kt) * scale
                if penalty is not None:
                    s = s + penalty[r0:r1]
                s -= s.max(axis=-1, keepdims=True)
                np.exp(s, out=s)
                s /= s.sum(axis=-1, keepdims=True)
                out[i, r0:r1] = s @ vf[i]
        return Tensor(out.reshape(q.shape))
    scores = mul(matmul(q, transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))),
                 1.0 / math.sqrt(dh))
    if mask is not None:
        penalty = np.where(np.asarray(mask, dtype=bool), ATTENTION_MASK_PENALTY, 0.0).astype(scores.data.dtype)
        scores = add(scores, Tensor(penalty))
    weights = softmax(scores, axis=-1)
    out = matmul(weights, v)
    if return_weights:
        return out, weights
    return out


def selective_scan(u: Tensor, delta: Tensor, a_log: Tensor, b_in: Tensor,
                   c_out: Tensor, d_skip: Tensor) -> Tensor:
    """Input-dependent diagonal state-space scan.

    u, delta: [B, L, E]; a_log: [E, N] (A = -exp(a_log)); b_in, c_out: [B, L, N];
    d_skip: [E]. Discretization: Abar = exp(delta*A), Bbar*x = delta*B*u.
    Recurrence h_t = Abar_t * h_{t-1} + Bbar_t x_t, y_t = <C_t, h_t> + D*u_t,
    evaluated as a sequential scan (linear in L).
    """
    bsz, ln, ch = u.shape
    nst = a_log.shape[1]
    a_mat = -np.exp(a_log.data)                                   # [E, N]
    dA = np.exp(delta.data[..., None] * a_mat)                    # [B, L, E, N]
    dBu = delta.data[..., None] * b_in.data[:, :, None, :] * u.data[..., None]
    hs = np.empty((bsz, ln, ch, nst), dtype=u.data.dtype)
    h = np.zeros((bsz, ch, nst), dtype=u.data.dtype)
    for t in range(ln):
        h = dA[:, t] * h + dBu[:, t]
        hs[:, t] = h
    y = np.matmul(hs, c_out.data[..., None])[..., 0] + u.data * d_skip.data
    out = Tensor(y)

    def backward(g):
        dc = np.matmul(g[:, :, None, :], hs)[:, :, 0, :]
        dd = (g * u.data).sum(axis=(0, 1))
        du = g * d_skip.data
        d_dA = np.empty_like(dA)
        d_dBu = np.empty_like(dBu)
        gh = np.zeros((bsz, ch, nst), dtype=u.data.dtype)
        for t in range(ln - 1, -1, -1):
            gh = gh + g[:, t, :, None] * c_out.data[:, t, None, :]
            h_prev = hs[:, t - 1] if t > 0 else 0.0
            d_dA[:, t] = gh * h_prev
            d_dBu[:, t] = gh
            gh = gh * dA[:, t]
        # dA = exp(delta*A): chain back to delta and A
        dA_term = d_dA * dA
        ddelta = (dA_term * a_mat).sum(axis=-1)
        da_mat = (dA_term * delta.data[..., None]).sum(axis=(0, 1))
        da_log = da_mat * a_mat  # d(a_mat)/d(a_log) = -exp(a_log) = a_mat
        # dBu = delta * B * u
        bu = b_in.data[:, :, None, :]
        ddelta += (d_dBu * bu).sum(axis=-1) * u.data
        db = (d_dBu * (delta.data * u.data)[..., None]).sum(axis=2)
        du += (d_dBu * bu).sum(axis=-1) * delta.data
        return du, ddelta, da_log, db, dc, dd

    return _record((u, delta, a_log, b_in, c_out, d_skip), out, backward, "selective_scan")


# ---------------------------------------------------------------------------
# grid scatter / gather for the (d+1) x (d+1) stabilizer lattice
# ---------------------------------------------------------------------------

def scatter_to_grid(x: Tensor, rows: np.ndarray, cols: np.ndarray, hw: int) -> Tensor:
    """[B, l, D] slot features -> [B, D, hw, hw] grid; unused cells stay zero."""
    bsz, nslot, ch = x.shape
    grid = np.zeros((bsz, ch, hw, hw), dtype=x.data.dtype)
    grid[:, :, rows, cols] = np.swapaxes(x.data, 1, 2)
    out = Tensor(grid)

    def backward(g):
        return (np.swapaxes(g[:, :, rows, cols], 1, 2),)

    return _record((x,), out, backward, "scatter_to_grid")


def gather_from_grid(grid: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """[B, D, H, W] grid -> [B, l, D] slot features at the occupied cells."""
    out = Tensor(np.swapaxes(grid.data[:, :, rows, cols], 1, 2))

    def backward(g):
        dg = np.zeros_like(grid.data)
        dg[:, :, rows, cols] = np.swapaxes(g, 1, 2)
        return (dg,)

    return _record((grid,), out, backward, "gather_from_grid")


def assert_finite(x: Tensor, where: str):
    """Raise NumericError naming the layer if any value is NaN/Inf."""
    if not np.all(np.isfinite(x.data)):
        raise NumericError(f"non-finite values in {where}")
    return x
