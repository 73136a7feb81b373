"""Dense float64 tensors with broadcasting and reverse-mode autodiff.

Every differentiable operation records a :class:`Node` on the calling
thread's :class:`Tape`. ``backward`` walks the nodes reachable from a
scalar root in reverse creation order and accumulates gradients into the
leaf tensors that require them.
"""

from __future__ import annotations

import contextlib
import itertools
import struct
import threading
from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]

__all__ = [
    "Tensor",
    "Parameter",
    "Tape",
    "ShapeError",
    "BackwardError",
    "tensor",
    "zeros",
    "ones",
    "no_grad",
    "is_grad_enabled",
    "get_tape",
    "backward",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "abs",
    "relu",
    "sqrt",
    "matmul",
    "sum",
    "mean",
    "max",
    "conv2d",
    "max_pool2d",
    "reshape",
    "transpose",
    "broadcast_to",
    "where",
    "gather",
    "logsumexp",
    "to_bytes",
    "from_bytes",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class BackwardError(RuntimeError):
    """``backward`` was called on a root it cannot differentiate."""


class Node:
    __slots__ = ("op", "inputs", "backward_fn", "index")

    def __init__(self, op: str, inputs: Tuple["Tensor", ...], backward_fn: Callable, index: int):
        self.op = op
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.index = index

    def __repr__(self):
        return f"Node({self.op!r}, index={self.index})"


class Tape:
    """Append-only record of operations for one thread.

    Node indices come from a counter that never resets, so creation order
    is a valid topological order even across :meth:`clear` calls.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._counter = itertools.count()

    def record(self, op: str, inputs, backward_fn) -> Node:
        node = Node(op, tuple(inputs), backward_fn, next(self._counter))
        self.nodes.append(node)
        return node

    def clear(self):
        # the graph stays reachable through tensors; only the index is dropped
        self.nodes.clear()

    def __len__(self):
        return len(self.nodes)


class _ThreadState(threading.local):
    def __init__(self):
        self.tape = Tape()
        self.grad_enabled = True


_state = _ThreadState()


def get_tape() -> Tape:
    return _state.tape


def is_grad_enabled() -> bool:
    return _state.grad_enabled


@contextlib.contextmanager
def no_grad():
    """Disable recording for sampling-only passes."""
    prev = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    """An n-dimensional float64 array that can take part in autodiff.

    Args:
        data: anything :func:`numpy.asarray` accepts.
        requires_grad: whether ``backward`` should accumulate into ``grad``.
    """

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=np.float64)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[Tensor] = None
        self.node: Optional[Node] = None
        # set on every op output, even under no_grad; marks pass-computed values
        self.is_computed = False

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def tolist(self):
        return self.data.tolist()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def clone(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=6)}{grad})"

    def __len__(self):
        return len(self.data)

    def __float__(self):
        return self.item()

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    # comparisons produce plain boolean arrays; they are never differentiable
    def __eq__(self, other):
        return self.data == _raw(other)

    def __ne__(self, other):
        return self.data != _raw(other)

    def __lt__(self, other):
        return self.data < _raw(other)

    def __le__(self, other):
        return self.data <= _raw(other)

    def __gt__(self, other):
        return self.data > _raw(other)

    def __ge__(self, other):
        return self.data >= _raw(other)

    __hash__ = object.__hash__

    # -- operators --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __abs__(self):
        return abs(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, index):
        return getitem(self, index)

    # -- method aliases ---------------------------------------------------
    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def abs(self):
        return abs(self)

    def relu(self):
        return relu(self)

    def sqrt(self):
        return sqrt(self)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def max(self, axis=None, keepdims=False):
        return max(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def view(self, *shape):
        return self.reshape(*shape)

    def transpose(self, axes=None):
        return transpose(self, axes)


class Parameter(Tensor):
    """A learnable leaf tensor. ``name`` is filled in by module enumeration."""

    def __init__(self, data: ArrayLike, name: str = ""):
        super().__init__(np.array(_raw(data), dtype=np.float64), requires_grad=True)
        self.name = name

    def __repr__(self):
        label = f"{self.name}: " if self.name else ""
        return f"Parameter({label}{np.array2string(self.data, precision=6)})"


# -- construction helpers -----------------------------------------------------


def _raw(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(data: ArrayLike, requires_grad: bool = False) -> Tensor:
    return Tensor(np.array(_raw(data), dtype=np.float64), requires_grad=requires_grad)


def zeros(*shape) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    return Tensor(np.zeros(shape))


def ones(*shape) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    return Tensor(np.ones(shape))


def _make(data: np.ndarray, inputs: Iterable[Tensor], backward_fn: Callable, op: str) -> Tensor:
    inputs = tuple(inputs)
    out = Tensor(data)
    out.is_computed = True
    if _state.grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = _state.tape.record(op, inputs, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def broadcast_shape(a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a, b))
    except ValueError:
        raise ShapeError(f"shapes {a} and {b} are not broadcastable") from None


# -- elementwise binary -------------------------------------------------------


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape(a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape(a.shape, b.shape)
    ad, bd = a.data, b.data

    def backward_fn(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _make(ad * bd, (a, b), backward_fn, "mul")


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape(a.shape, b.shape)
    ad, bd = a.data, b.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ad / bd

    def backward_fn(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * ad / (bd * bd), bd.shape)

    return _make(out, (a, b), backward_fn, "div")


def power(a: ArrayLike, exponent: float) -> Tensor:
    a = as_tensor(a)
    if isinstance(exponent, Tensor):
        if exponent.size != 1 or exponent.requires_grad:
            raise TypeError("power only supports a constant scalar exponent")
        exponent = exponent.item()
    p = float(exponent)
    ad = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ad**p
    return _make(out, (a,), lambda g: (g * p * ad ** (p - 1),), "pow")


# -- elementwise unary --------------------------------------------------------


def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(ad)

    def backward_fn(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (g / ad,)

    return _make(out, (a,), backward_fn, "log")


def abs(a: ArrayLike) -> Tensor:  # noqa: A001 - mirrors the numpy name
    a = as_tensor(a)
    sign = np.sign(a.data)  # sign(0) == 0 is the kink subgradient
    return _make(np.abs(a.data), (a,), lambda g: (g * sign,), "abs")


def relu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def sqrt(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.data)

    def backward_fn(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (g * 0.5 / out,)

    return _make(out, (a,), backward_fn, "sqrt")


# -- linear algebra -----------------------------------------------------------


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


def transpose(a: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def reshape(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"cannot reshape {src} into {tuple(shape)}") from None
    return _make(out, (a,), lambda g: (g.reshape(src),), "reshape")


def broadcast_to(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    src = a.shape
    if broadcast_shape(src, shape) != shape:
        raise ShapeError(f"cannot broadcast {src} to {shape}")
    out = np.broadcast_to(a.data, shape).copy()
    return _make(out, (a,), lambda g: (_unbroadcast(g, src),), "broadcast_to")


def getitem(a: ArrayLike, index) -> Tensor:
    a = as_tensor(a)
    if isinstance(index, Tensor):
        index = index.data.astype(np.int64)
    src = a.shape
    out = np.array(a.data[index], dtype=np.float64)

    def backward_fn(g):
        full = np.zeros(src)
        np.add.at(full, index, g)
        return (full,)

    return _make(out, (a,), backward_fn, "getitem")


def where(cond, a: ArrayLike, b: ArrayLike) -> Tensor:
    """Select ``a`` where ``cond`` holds and ``b`` elsewhere; ``cond`` is constant."""
    cond = np.asarray(_raw(cond) if isinstance(cond, Tensor) else cond, dtype=bool)
    a, b = as_tensor(a), as_tensor(b)
    shape = broadcast_shape(broadcast_shape(cond.shape, a.shape), b.shape)
    sa, sb = a.shape, b.shape
    out = np.where(cond, a.data, b.data)

    def backward_fn(g):
        g = np.broadcast_to(g, shape)
        return _unbroadcast(np.where(cond, g, 0.0), sa), _unbroadcast(np.where(cond, 0.0, g), sb)

    return _make(out, (a, b), backward_fn, "where")


def gather(a: ArrayLike, indices: np.ndarray) -> Tensor:
    """Pick ``a[..., indices[...]]`` along the last axis.

    ``indices`` must have shape ``a.shape[:-1]``.
    """
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.shape != a.shape[:-1]:
        raise ShapeError(f"gather indices {idx.shape} do not match batch shape {a.shape[:-1]}")
    src = a.shape
    out = np.take_along_axis(a.data, idx[..., None], axis=-1)[..., 0]

    def backward_fn(g):
        full = np.zeros(src)
        np.put_along_axis(full, idx[..., None], g[..., None], axis=-1)
        return (full,)

    return _make(out, (a,), backward_fn, "gather")


# -- reductions ---------------------------------------------------------------


def _norm_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    out = []
    for ax in axis:
        if not -ndim <= ax < ndim or (ndim == 0):
            raise np.exceptions.AxisError(f"axis {ax} is out of bounds for rank {ndim}")
        out.append(ax % ndim)
    if len(set(out)) != len(out):
        raise np.exceptions.AxisError(f"repeated axis in {tuple(axis)}")
    return tuple(sorted(out))


def _expand_reduced(g: np.ndarray, src: Tuple[int, ...], axes: Tuple[int, ...], keepdims: bool):
    if not keepdims:
        g = np.expand_dims(g, axes) if axes else g
    return np.broadcast_to(g, src)


def sum(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    src = a.shape
    out = np.sum(a.data, axis=axes, keepdims=keepdims)
    return _make(
        np.asarray(out, dtype=np.float64),
        (a,),
        lambda g: (_expand_reduced(g, src, axes, keepdims).copy(),),
        "sum",
    )


def mean(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    src = a.shape
    count = int(np.prod([src[i] for i in axes])) if axes else 1
    out = np.sum(a.data, axis=axes, keepdims=keepdims) / count
    return _make(
        np.asarray(out, dtype=np.float64),
        (a,),
        lambda g: (_expand_reduced(g, src, axes, keepdims) / count,),
        "mean",
    )


def max(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Maximum over ``axis``; the gradient goes to the first maximal element."""
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    src = a.shape
    keep = [i for i in range(a.ndim) if i not in axes]
    moved = np.transpose(a.data, keep + list(axes))
    kept_shape = moved.shape[: len(keep)]
    flat = moved.reshape(kept_shape + (-1,))
    arg = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    if keepdims:
        out = np.expand_dims(out, axes) if axes else out

    def backward_fn(g):
        g = np.asarray(g).reshape(kept_shape)
        hot = np.zeros(flat.shape)
        np.put_along_axis(hot, arg[..., None], g[..., None], axis=-1)
        hot = hot.reshape(moved.shape)
        return (np.transpose(hot, np.argsort(keep + list(axes))).reshape(src),)

    return _make(np.asarray(out, dtype=np.float64), (a,), backward_fn, "max")


def logsumexp(a: ArrayLike, axis=-1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shift = Tensor(np.max(a.data, axis=axis, keepdims=True))
    shift.data = np.where(np.isfinite(shift.data), shift.data, 0.0)
    out = log(sum(exp(a - shift), axis=axis, keepdims=True)) + shift
    if not keepdims:
        out = reshape(out, np.squeeze(out.data, axis=axis).shape)
    return out


# -- convolution and pooling --------------------------------------------------


def conv2d(x: ArrayLike, kernel: ArrayLike, bias: Optional[ArrayLike] = None) -> Tensor:
    """Stride-1, unpadded 2-D cross-correlation.

    Shapes: ``x`` (N, C, H, W), ``kernel`` (O, C, kh, kw), ``bias`` (O,).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects rank-4 input and kernel, got {x.shape} and {kernel.shape}")
    n, c, h, w = x.shape
    o, kc, kh, kw = kernel.shape
    if kc != c:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape}, kernel {kernel.shape}")
    if kh > h or kw > w:
        raise ShapeError(f"conv2d kernel {kernel.shape} exceeds input {x.shape}")
    bias = as_tensor(np.zeros(o) if bias is None else bias)
    if bias.shape != (o,):
        raise ShapeError(f"conv2d bias must have shape {(o,)}, got {bias.shape}")
    xd, kd = x.data, kernel.data
    ho, wo = h - kh + 1, w - kw + 1
    windows = np.lib.stride_tricks.sliding_window_view(xd, (kh, kw), axis=(2, 3))
    out = np.einsum("ncijpq,ocpq->noij", windows, kd) + bias.data[None, :, None, None]

    def backward_fn(g):
        gk = np.einsum("ncijpq,noij->ocpq", windows, g)
        gx = np.zeros_like(xd)
        for p in range(kh):
            for q in range(kw):
                gx[:, :, p : p + ho, q : q + wo] += np.einsum("noij,oc->ncij", g, kd[:, :, p, q])
        return gx, gk, g.sum(axis=(0, 2, 3))

    return _make(out, (x, kernel, bias), backward_fn, "conv2d")


def max_pool2d(x: ArrayLike, window) -> Tensor:
    """Non-overlapping max pooling; ties route the gradient to the lowest flat index."""
    x = as_tensor(x)
    if isinstance(window, int):
        window = (window, window)
    kh, kw = window
    if x.ndim != 4:
        raise ShapeError(f"max_pool2d expects (N, C, H, W), got {x.shape}")
    n, c, h, w = x.shape
    if h % kh or w % kw:
        raise ShapeError(f"max_pool2d: input {h}x{w} not divisible by window {kh}x{kw}")
    ho, wo = h // kh, w // kw
    blocks = x.data.reshape(n, c, ho, kh, wo, kw).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, kh * kw)
    arg = np.argmax(blocks, axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward_fn(g):
        hot = np.zeros(blocks.shape)
        np.put_along_axis(hot, arg[..., None], g[..., None], axis=-1)
        gx = hot.reshape(n, c, ho, wo, kh, kw).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (gx,)

    return _make(out, (x,), backward_fn, "max_pool2d")


# -- backward -----------------------------------------------------------------


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into every reachable leaf's ``grad``."""
    if root.ndim != 0:
        raise BackwardError(f"backward needs a rank-0 root, got shape {root.shape}")
    if not root.requires_grad:
        raise BackwardError("root is detached from the tape (requires_grad is False)")
    if root.node is None:
        _accumulate(root, np.ones(()))
        return

    nodes = {}
    stack = [root.node]
    while stack:
        node = stack.pop()
        if node.index in nodes:
            continue
        nodes[node.index] = node
        for t in node.inputs:
            if t.node is not None and t.node.index not in nodes:
                stack.append(t.node)

    grads = {root.node.index: np.ones(())}
    for index in sorted(nodes, reverse=True):
        node = nodes[index]
        g = grads.pop(index, None)
        if g is None:
            continue
        in_grads = node.backward_fn(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if t.node is not None:
                prev = grads.get(t.node.index)
                grads[t.node.index] = gi if prev is None else prev + gi
            else:
                _accumulate(t, gi)
    _state.tape.clear()


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=np.float64).reshape(t.shape)
    if t.grad is None:
        t.grad = Tensor(g.copy())
    else:
        t.grad = Tensor(t.grad.data + g)


# -- serialization ------------------------------------------------------------

_MAGIC = b"PTNS"
_VERSION = 1


def to_bytes(t: ArrayLike) -> bytes:
    """Encode as ``PTNS | u16 version | u16 rank | u64 extents | f64 data`` (little-endian)."""
    arr = np.asarray(_raw(t), dtype="<f8", order="C")  # ascontiguousarray would promote rank 0
    head = _MAGIC + struct.pack("<HH", _VERSION, arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + arr.tobytes(order="C")


def from_bytes(buf: bytes) -> Tensor:
    if buf[:4] != _MAGIC:
        raise ValueError("not a tensor record: bad magic bytes")
    version, rank = struct.unpack_from("<HH", buf, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported tensor record version {version}")
    shape = struct.unpack_from(f"<{rank}Q", buf, 8)
    offset = 8 + 8 * rank
    count = int(np.prod(shape)) if rank else 1
    if len(buf) != offset + 8 * count:
        raise ValueError("tensor record length does not match its extents")
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=offset).astype(np.float64)
    return Tensor(data.reshape(shape))
