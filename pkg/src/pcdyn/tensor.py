"""Reverse-mode automatic differentiation on numpy arrays.

A ``Tensor`` wraps a float32 or float64 numpy array. Operations executed while
a ``Tape`` is active record backward closures on that tape; ``Tape.backward``
replays them in reverse execution order and accumulates gradients into
``Tensor.grad``. Broadcasting is restricted to scalar-with-anything; all other
binary operands must have identical shapes.

Every primitive checks its output for non-finite values and raises
``NumericalError`` rather than letting NaN or inf propagate silently.
"""

from __future__ import annotations

import threading

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "NumericalError",
    "TapeError",
    "DEFAULT_DTYPE",
    "tensor",
    "zeros",
    "ones",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "relu",
    "sigmoid",
    "dense",
    "conv2d",
    "conv_transpose2d",
    "upsample_bilinear2x",
    "upsample_bilinear2x_adjoint",
    "maxpool2x2",
    "reshape",
    "flatten",
    "sum_all",
    "mean_all",
    "softmax",
    "cross_entropy",
    "mse",
    "detach",
]

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """An operation received operands with incompatible shapes."""


class NumericalError(ArithmeticError):
    """An operation produced NaN or infinite values."""


class TapeError(RuntimeError):
    """A tape was used after being consumed, or misused as a context."""


def _check_finite(name: str, arr: np.ndarray) -> None:
    # min/max are NaN-propagating and catch +-inf without allocating a
    # temporary bool array the size of the operand.
    if arr.size == 0:
        return
    if not (np.isfinite(arr.min()) and np.isfinite(arr.max())):
        raise NumericalError(f"{name}: produced non-finite values")


class Tensor:
    """A numpy array with an optional gradient slot.

    ``data`` is the raw array (always float32 or float64); ``grad`` is filled
    by ``Tape.backward`` and has the same shape and dtype as ``data``.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor has {self.data.size} elements, expected 1")
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return detach(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self) -> "Tensor":
        return sum_all(self)

    def mean(self) -> "Tensor":
        return mean_all(self)

    def _accumulate(self, g: np.ndarray) -> None:
        _check_finite("backward", g)
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_coerce(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __repr__(self) -> str:
        return (
            f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, "
            f"requires_grad={self.requires_grad})"
        )


_state = threading.local()


def _tape_stack() -> list:
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = []
        _state.tapes = stack
    return stack


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Records operations for one backward pass.

    Use as a context manager; ops executed inside the ``with`` block whose
    inputs require gradients are recorded. ``backward`` replays the records
    once, in reverse execution order, then marks the tape consumed.
    """

    def __init__(self):
        self._records = []
        self._consumed = False
        self._entered = False

    def __enter__(self) -> "Tape":
        if self._entered:
            raise TapeError("tape is already active")
        self._entered = True
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise TapeError("tape stack corrupted: exiting a tape that is not on top")
        stack.pop()
        self._entered = False
        return False

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(input) into ``grad`` of every recorded input."""
        if self._consumed:
            raise TapeError("tape already consumed by a previous backward call")
        self._consumed = True
        if loss.shape != ():
            raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
        loss._accumulate(np.ones((), dtype=loss.dtype))
        for out, fn in reversed(self._records):
            if out.grad is None:
                continue
            fn(out.grad)
        self._records.clear()


def _record(out: Tensor, inputs: tuple, fn) -> None:
    if not any(t.requires_grad for t in inputs):
        return
    out.requires_grad = True
    tape = _active_tape()
    if tape is not None:
        if tape._consumed:
            raise TapeError("recording on a consumed tape")
        tape._records.append((out, fn))


def _coerce(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _binary_shapes(name: str, a: Tensor, b: Tensor) -> None:
    if a.dtype != b.dtype:
        raise TypeError(f"{name}: dtype mismatch {a.dtype.name} vs {b.dtype.name}")
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError(
            f"{name}: shapes {a.shape} and {b.shape} differ and neither is scalar"
        )


def _reduce_to(g: np.ndarray, t: Tensor) -> np.ndarray:
    # Gradient for a scalar operand broadcast against an array operand.
    if t.shape == () and g.shape != ():
        return np.asarray(g.sum(), dtype=t.dtype)
    return g


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    """Wrap ``data`` in a leaf Tensor."""
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def zeros(shape, dtype=DEFAULT_DTYPE, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def ones(shape, dtype=DEFAULT_DTYPE, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=requires_grad)


def add(a, b) -> Tensor:
    a = _coerce(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _coerce(b, a.dtype)
    _binary_shapes("add", a, b)
    out = Tensor(a.data + b.data)
    _check_finite("add", out.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_reduce_to(g, a))
        if b.requires_grad:
            b._accumulate(_reduce_to(g, b))

    _record(out, (a, b), backward)
    return out


def sub(a, b) -> Tensor:
    a = _coerce(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _coerce(b, a.dtype)
    _binary_shapes("sub", a, b)
    out = Tensor(a.data - b.data)
    _check_finite("sub", out.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_reduce_to(g, a))
        if b.requires_grad:
            b._accumulate(_reduce_to(-g, b))

    _record(out, (a, b), backward)
    return out


def mul(a, b) -> Tensor:
    a = _coerce(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _coerce(b, a.dtype)
    _binary_shapes("mul", a, b)
    with np.errstate(over="ignore"):
        out = Tensor(a.data * b.data)
    _check_finite("mul", out.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_reduce_to(g * b.data, a))
        if b.requires_grad:
            b._accumulate(_reduce_to(g * a.data, b))

    _record(out, (a, b), backward)
    return out


def div(a, b) -> Tensor:
    a = _coerce(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _coerce(b, a.dtype)
    _binary_shapes("div", a, b)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = Tensor(a.data / b.data)
    _check_finite("div", out.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_reduce_to(g / b.data, a))
        if b.requires_grad:
            b._accumulate(_reduce_to(-g * a.data / (b.data * b.data), b))

    _record(out, (a, b), backward)
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(-g)

    _record(out, (a,), backward)
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0))
    _check_finite("relu", out.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (a.data > 0))

    _record(out, (a,), backward)
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # Stable in both tails: exp of a non-positive argument only.
    pos = x >= 0
    e = np.exp(np.where(pos, -x, x))
    s = np.where(pos, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
    out = Tensor(s)
    _check_finite("sigmoid", out.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * s * (1.0 - s))

    _record(out, (a,), backward)
    return out


def dense(x: Tensor, w: Tensor, b=None) -> Tensor:
    """Affine map ``x @ w + b`` with x (N, D), w (D, M), b (M,) or None."""
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError(f"dense: expected 2-d operands, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(
            f"dense: input features {x.shape[1]} (dim 1) != weight rows {w.shape[0]} (dim 0)"
        )
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeError(f"dense: bias shape {b.shape} != ({w.shape[1]},)")
    with np.errstate(over="ignore", invalid="ignore"):
        y = x.data @ w.data
        if b is not None:
            y = y + b.data
    out = Tensor(y)
    _check_finite("dense", out.data)

    inputs = (x, w) if b is None else (x, w, b)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ w.data.T)
        if w.requires_grad:
            w._accumulate(x.data.T @ g)
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=0))

    _record(out, inputs, backward)
    return out


def _conv_geometry(name, x, w, stride, padding):
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"{name}: expected 4-d input and weight, got {x.shape} and {w.shape}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"{name}: invalid stride {stride} or padding {padding}")


def conv2d(x: Tensor, w: Tensor, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d cross-correlation.

    x is (N, Cin, H, W); w is (Cout, Cin, kh, kw); b is (Cout,) or None.
    Output is (N, Cout, H', W') with H' = (H + 2*padding - kh)//stride + 1.
    """
    _conv_geometry("conv2d", x, w, stride, padding)
    n, cin, h, wd = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d: input channels {cin} (dim 1) != weight in-channels {cin_w} (dim 1)")
    if h + 2 * padding < kh or wd + 2 * padding < kw:
        raise ShapeError(
            f"conv2d: kernel ({kh}, {kw}) larger than padded input "
            f"({h + 2 * padding}, {wd + 2 * padding})"
        )
    if b is not None and b.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {b.shape} != ({cout},)")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # win is (N, Cin, H', W', kh, kw); contract Cin and the kernel taps.
    with np.errstate(over="ignore", invalid="ignore"):
        y = np.tensordot(win, w.data, axes=([1, 4, 5], [1, 2, 3]))
        y = np.ascontiguousarray(y.transpose(0, 3, 1, 2))
        if b is not None:
            y += b.data.reshape(1, cout, 1, 1)
    out = Tensor(y)
    _check_finite("conv2d", out.data)

    hp_, wp_ = y.shape[2], y.shape[3]
    inputs = (x, w) if b is None else (x, w, b)

    def backward(g):
        if x.requires_grad:
            # One gemm to per-tap column gradients, then scatter each tap
            # back onto its strided footprint in the padded input.
            cols = np.tensordot(g, w.data, axes=([1], [0]))  # (N, H', W', Cin, kh, kw)
            xg = np.zeros_like(xp)
            for u in range(kh):
                for v in range(kw):
                    xg[:, :, u:u + stride * hp_:stride, v:v + stride * wp_:stride] += (
                        cols[:, :, :, :, u, v].transpose(0, 3, 1, 2)
                    )
            if padding:
                xg = xg[:, :, padding:padding + h, padding:padding + wd]
            x._accumulate(xg)
        if w.requires_grad:
            wv = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
            w._accumulate(np.tensordot(g, wv, axes=([0, 2, 3], [0, 2, 3])))
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3)))

    _record(out, inputs, backward)
    return out


def conv_transpose2d(x: Tensor, w: Tensor, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed 2-d convolution (the adjoint of ``conv2d`` in its input).

    x is (N, Cin, H, W); w is (Cin, Cout, kh, kw); b is (Cout,) or None.
    Output is (N, Cout, (H-1)*stride + kh - 2*padding, ...).
    """
    _conv_geometry("conv_transpose2d", x, w, stride, padding)
    n, cin, h, wd = x.shape
    cin_w, cout, kh, kw = w.shape
    if cin != cin_w:
        raise ShapeError(
            f"conv_transpose2d: input channels {cin} (dim 1) != weight in-channels {cin_w} (dim 0)"
        )
    ho = (h - 1) * stride + kh - 2 * padding
    wo = (wd - 1) * stride + kw - 2 * padding
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv_transpose2d: output size ({ho}, {wo}) is not positive")
    if b is not None and b.shape != (cout,):
        raise ShapeError(f"conv_transpose2d: bias shape {b.shape} != ({cout},)")

    with np.errstate(over="ignore", invalid="ignore"):
        cols = np.tensordot(x.data, w.data, axes=([1], [0]))  # (N, H, W, Cout, kh, kw)
        ypad = np.zeros((n, cout, ho + 2 * padding, wo + 2 * padding), dtype=x.dtype)
        for u in range(kh):
            for v in range(kw):
                ypad[:, :, u:u + stride * h:stride, v:v + stride * wd:stride] += (
                    cols[:, :, :, :, u, v].transpose(0, 3, 1, 2)
                )
        y = ypad[:, :, padding:padding + ho, padding:padding + wo] if padding else ypad
        y = np.ascontiguousarray(y)
        if b is not None:
            y += b.data.reshape(1, cout, 1, 1)
    out = Tensor(y)
    _check_finite("conv_transpose2d", out.data)

    inputs = (x, w) if b is None else (x, w, b)

    def backward(g):
        gp = np.pad(g, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else g
        win = sliding_window_view(gp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        if x.requires_grad:
            x._accumulate(np.tensordot(win, w.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2))
        if w.requires_grad:
            w._accumulate(np.tensordot(x.data, win, axes=([0, 2, 3], [0, 2, 3])))
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3)))

    _record(out, inputs, backward)
    return out


_INTERP_CACHE: dict = {}


def _interp_matrix(n_in: int) -> np.ndarray:
    """Dense (2n, n) bilinear interpolation matrix, half-pixel-centered."""
    m = _INTERP_CACHE.get(n_in)
    if m is None:
        n_out = 2 * n_in
        m = np.zeros((n_out, n_in), dtype=np.float64)
        for o in range(n_out):
            src = (o + 0.5) / 2.0 - 0.5
            i0 = int(np.floor(src))
            t = src - i0
            lo = min(max(i0, 0), n_in - 1)
            hi = min(max(i0 + 1, 0), n_in - 1)
            m[o, lo] += 1.0 - t
            m[o, hi] += t
        _INTERP_CACHE[n_in] = m
    return m


def upsample_bilinear2x(x: Tensor) -> Tensor:
    """Bilinear 2x upsampling of (N, C, H, W) along the two spatial axes."""
    if x.ndim != 4:
        raise ShapeError(f"upsample_bilinear2x: expected 4-d input, got {x.shape}")
    h, wd = x.shape[2], x.shape[3]
    mh = _interp_matrix(h).astype(x.dtype)
    mw = _interp_matrix(wd).astype(x.dtype)
    out = Tensor(np.matmul(np.matmul(mh, x.data), mw.T))
    _check_finite("upsample_bilinear2x", out.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.matmul(np.matmul(mh.T, g), mw))

    _record(out, (x,), backward)
    return out


def upsample_bilinear2x_adjoint(x: Tensor) -> Tensor:
    """The transpose map of ``upsample_bilinear2x``: (N, C, 2H, 2W) -> (N, C, H, W).

    Used where a downstream gradient of an upsampling step must itself stay
    differentiable; its backward is bilinear upsampling.
    """
    if x.ndim != 4:
        raise ShapeError(f"upsample_bilinear2x_adjoint: expected 4-d input, got {x.shape}")
    h2, w2 = x.shape[2], x.shape[3]
    if h2 % 2 or w2 % 2:
        raise ShapeError(
            f"upsample_bilinear2x_adjoint: spatial dims ({h2}, {w2}) must be even"
        )
    mh = _interp_matrix(h2 // 2).astype(x.dtype)
    mw = _interp_matrix(w2 // 2).astype(x.dtype)
    out = Tensor(np.matmul(np.matmul(mh.T, x.data), mw))
    _check_finite("upsample_bilinear2x_adjoint", out.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.matmul(np.matmul(mh, g), mw.T))

    _record(out, (x,), backward)
    return out


def maxpool2x2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; ties take the first element in row-major order."""
    if x.ndim != 4:
        raise ShapeError(f"maxpool2x2: expected 4-d input, got {x.shape}")
    n, c, h, wd = x.shape
    if h % 2 or wd % 2:
        raise ShapeError(f"maxpool2x2: spatial dims ({h}, {wd}) must be even")
    h2, w2 = h // 2, wd // 2
    xr = x.data.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    idx = xr.argmax(axis=-1)
    out = Tensor(np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0])
    _check_finite("maxpool2x2", out.data)

    def backward(g):
        if x.requires_grad:
            buf = np.zeros((n, c, h2, w2, 4), dtype=g.dtype)
            np.put_along_axis(buf, idx[..., None], g[..., None], axis=-1)
            x._accumulate(
                buf.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, wd)
            )

    _record(out, (x,), backward)
    return out


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = Tensor(x.data.reshape(shape))

    def backward(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.shape))

    _record(out, (x,), backward)
    return out


def flatten(x: Tensor) -> Tensor:
    """Collapse all but the leading axis: (N, ...) -> (N, D)."""
    if x.ndim < 2:
        raise ShapeError(f"flatten: expected at least 2-d input, got {x.shape}")
    return reshape(x, (x.shape[0], -1))


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(x.data.sum(), dtype=x.dtype))
    _check_finite("sum_all", out.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.full(x.shape, g, dtype=x.dtype))

    _record(out, (x,), backward)
    return out


def mean_all(x: Tensor) -> Tensor:
    if x.size == 0:
        raise ShapeError("mean_all: empty tensor")
    inv = 1.0 / x.size
    out = Tensor(np.asarray(x.data.mean(), dtype=x.dtype))
    _check_finite("mean_all", out.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.full(x.shape, g * inv, dtype=x.dtype))

    _record(out, (x,), backward)
    return out


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(s.astype(x.dtype, copy=False))
    _check_finite("softmax", out.data)

    def backward(g):
        if x.requires_grad:
            dot = (g * s).sum(axis=-1, keepdims=True)
            x._accumulate((s * (g - dot)).astype(x.dtype, copy=False))

    _record(out, (x,), backward)
    return out


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy between row softmaxes of ``logits`` and integer ``labels``.

    logits is (N, K); labels is an integer array of shape (N,) with values in
    [0, K). Returns a scalar Tensor.
    """
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be 2-d, got {logits.shape}")
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"cross_entropy: labels shape {labels.shape} != ({n},)")
    if not np.issubdtype(labels.dtype, np.integer):
        raise TypeError(f"cross_entropy: labels must be integers, got {labels.dtype}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ShapeError(f"cross_entropy: labels out of range [0, {k})")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    losses = lse - z[rows, labels]
    out = Tensor(np.asarray(losses.mean(), dtype=logits.dtype))
    _check_finite("cross_entropy", out.data)

    def backward(g):
        if logits.requires_grad:
            p = np.exp(z - np.log(np.exp(z).sum(axis=1, keepdims=True)))
            p[rows, labels] -= 1.0
            logits._accumulate((p * (g / n)).astype(logits.dtype, copy=False))

    _record(out, (logits,), backward)
    return out


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error over all elements of two same-shaped tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"mse: shapes {a.shape} and {b.shape} differ")
    if a.dtype != b.dtype:
        raise TypeError(f"mse: dtype mismatch {a.dtype.name} vs {b.dtype.name}")
    diff = a.data - b.data
    out = Tensor(np.asarray(np.mean(diff * diff), dtype=a.dtype))
    _check_finite("mse", out.data)
    inv = 2.0 / a.size

    def backward(g):
        scaled = (g * inv) * diff
        if a.requires_grad:
            a._accumulate(scaled)
        if b.requires_grad:
            b._accumulate(-scaled)

    _record(out, (a, b), backward)
    return out


def detach(x: Tensor) -> Tensor:
    """A leaf view of ``x``: shares the data array, carries no history."""
    return Tensor(x.data)
