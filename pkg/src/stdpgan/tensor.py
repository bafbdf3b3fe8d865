"""Dense 64-bit tensors with a single-use reverse-mode gradient tape.

Tensors are immutable numpy-backed values. A tensor becomes *tracked* when it
is created by ``Tape.watch`` or by an op whose inputs include a tracked
tensor; every op on tracked inputs appends one node to the owning tape.

Typical use::

    tape = Tape()
    w = tape.watch(np.ones((2, 2)))
    loss = total(matmul(w, x))
    (dw,) = tape.gradient(loss, [w])
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, NumericError, TapeError


def _all_finite(arr: np.ndarray) -> bool:
    # NaN and Inf propagate through a sum, so a finite sum clears the whole array
    total = np.add.reduce(arr, axis=None)
    if np.isfinite(total):
        return True
    return bool(np.all(np.isfinite(arr)))


class Tensor:
    __slots__ = ("data", "_tape", "_node")

    def __init__(self, data, _tape: Tape | None = None, _node: int = -1):
        arr = np.array(data, dtype=np.float64)
        if not _all_finite(arr):
            raise NumericError("tensor data contains NaN or Inf")
        arr.flags.writeable = False
        self.data = arr
        self._tape = _tape
        self._node = _node

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def tracked(self) -> bool:
        return self._tape is not None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        flag = ", tracked" if self.tracked else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Operator sugar for the elementwise subset.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return scale(-1.0, self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> Tensor:
        return transpose(self)


class Tape:
    """Ordered record of differentiable ops; supports exactly one backward pass."""

    def __init__(self):
        self._backward: list[Callable | None] = []
        self._inputs: list[tuple[int, ...]] = []
        self._shapes: list[tuple[int, ...]] = []
        self._used = False

    def __len__(self) -> int:
        return len(self._backward)

    def watch(self, value) -> Tensor:
        if self._used:
            raise TapeError("tape already consumed by a backward pass; start a new tape")
        data = value.data if isinstance(value, Tensor) else value
        t = Tensor(data, self, len(self._backward))
        self._backward.append(None)
        self._inputs.append(())
        self._shapes.append(t.shape)
        return t

    def _record(self, out: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
        if self._used:
            raise TapeError("tape already consumed by a backward pass; start a new tape")
        idx = len(self._backward)
        t = Tensor.__new__(Tensor)
        out.flags.writeable = False
        t.data = out
        t._tape = self
        t._node = idx
        self._backward.append(backward)
        # untracked inputs are constants; -1 marks "no gradient needed"
        self._inputs.append(tuple(x._node if x._tape is self else -1 for x in inputs))
        self._shapes.append(out.shape)
        return t

    def gradient(self, target: Tensor, sources: Iterable[Tensor]) -> list[np.ndarray]:
        """Gradients of a single-element ``target`` with respect to ``sources``.

        Sources that the target does not depend on receive zeros.
        """
        if self._used:
            raise TapeError("backward already run on this tape; re-run the forward pass")
        if target._tape is not self:
            raise TapeError("target was not recorded on this tape")
        if target.size != 1:
            raise DimensionError(f"gradient target must be a single element, got shape {target.shape}")
        self._used = True
        sources = list(sources)
        grads: list[np.ndarray | None] = [None] * len(self._backward)
        grads[target._node] = np.ones(target.shape)
        for idx in range(target._node, -1, -1):
            g = grads[idx]
            fn = self._backward[idx]
            if g is None or fn is None:
                continue
            parents = self._inputs[idx]
            local = fn(g)
            for p, pg in zip(parents, local):
                if p < 0 or pg is None:
                    continue
                grads[p] = pg if grads[p] is None else grads[p] + pg
        out = []
        for s in sources:
            if s._tape is not self:
                raise TapeError("source tensor was not recorded on this tape")
            g = grads[s._node]
            out.append(np.zeros(s.shape) if g is None else g)
        return out


# ---------------------------------------------------------------------------
# helpers


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tape_of(*ts: Tensor) -> Tape | None:
    tape = None
    for t in ts:
        if t._tape is not None:
            if tape is not None and t._tape is not tape:
                raise TapeError("inputs belong to different tapes")
            tape = t._tape
    return tape


def _finish(out: np.ndarray, inputs: Sequence[Tensor], backward: Callable, name: str) -> Tensor:
    out = np.asarray(out, dtype=np.float64)
    if not _all_finite(out):
        raise NumericError(f"{name} produced a non-finite value")
    tape = _tape_of(*inputs)
    if tape is None:
        return Tensor(out)
    return tape._record(out, inputs, backward)


def _need_2d(t: Tensor, name: str):
    if t.data.ndim != 2:
        raise DimensionError(f"{name} expects a 2-D tensor, got shape {t.shape}")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _need_2d(a, "matmul")
    _need_2d(b, "matmul")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    A, B = a.data, b.data

    def backward(g):
        return g @ B.T, A.T @ g

    return _finish(A @ B, (a, b), backward, "matmul")


def transpose(x) -> Tensor:
    x = as_tensor(x)
    _need_2d(x, "transpose")
    return _finish(x.data.T.copy(), (x,), lambda g: (g.T,), "transpose")


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"cannot reshape {x.shape} to {shape}")
    old = x.shape
    return _finish(x.data.reshape(shape).copy(), (x,), lambda g: (g.reshape(old),), "reshape")


# ---------------------------------------------------------------------------
# elementwise


def _same_shape(a: Tensor, b: Tensor, name: str):
    if a.shape != b.shape:
        raise DimensionError(f"{name} needs equal shapes, got {a.shape} and {b.shape}")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if b.size == 1 and b.shape != a.shape:
        return add_scalar(a, b)
    if a.size == 1 and a.shape != b.shape:
        return add_scalar(b, a)
    _same_shape(a, b, "add")
    return _finish(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "sub")
    return _finish(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    """Elementwise product of equally shaped tensors."""
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")
    A, B = a.data, b.data
    return _finish(A * B, (a, b), lambda g: (g * B, g * A), "mul")


def scale(s, x) -> Tensor:
    """``s * x`` where ``s`` is a python float or a single-element tensor."""
    x = as_tensor(x)
    if isinstance(s, Tensor):
        if s.size != 1:
            raise DimensionError(f"scale factor must have one element, got shape {s.shape}")
        sv = float(s.data.reshape(-1)[0])
        X, sshape = x.data, s.shape

        def backward(g):
            return np.reshape(np.sum(g * X), sshape), g * sv

        return _finish(sv * x.data, (s, x), backward, "scale")
    sv = float(s)
    return _finish(sv * x.data, (x,), lambda g: (g * sv,), "scale")


def add_scalar(x, s) -> Tensor:
    x = as_tensor(x)
    if isinstance(s, Tensor):
        if s.size != 1:
            raise DimensionError(f"scalar addend must have one element, got shape {s.shape}")
        sshape = s.shape
        return _finish(
            x.data + float(s.data.reshape(-1)[0]),
            (x, s),
            lambda g: (g, np.reshape(np.sum(g), sshape)),
            "add_scalar",
        )
    return _finish(x.data + float(s), (x,), lambda g: (g,), "add_scalar")


def relu(x) -> Tensor:
    return leaky_relu(x, 0.0)


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    mask = np.where(x.data > 0, 1.0, slope)
    return _finish(x.data * mask, (x,), lambda g: (g * mask,), "leaky_relu")


def square(x) -> Tensor:
    x = as_tensor(x)
    X = x.data
    return _finish(X * X, (x,), lambda g: (2.0 * g * X,), "square")


def abs_(x) -> Tensor:
    x = as_tensor(x)
    sign = np.sign(x.data)
    return _finish(np.abs(x.data), (x,), lambda g: (g * sign,), "abs")


# ---------------------------------------------------------------------------
# reductions


def total(x) -> Tensor:
    """Sum of all elements, as a 0-d tensor."""
    x = as_tensor(x)
    shp = x.shape
    return _finish(np.array(x.data.sum()), (x,), lambda g: (np.full(shp, float(g)),), "total")


def mean(x) -> Tensor:
    x = as_tensor(x)
    shp, n = x.shape, x.size
    return _finish(np.array(x.data.mean()), (x,), lambda g: (np.full(shp, float(g) / n),), "mean")


def stack_sum(xs: Sequence[Tensor]) -> Tensor:
    """Sum of a list of equally shaped tensors in fixed left-to-right order."""
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise DimensionError("stack_sum of an empty list")
    for x in xs[1:]:
        _same_shape(xs[0], x, "stack_sum")
    out = xs[0].data.copy()
    for x in xs[1:]:
        out = out + x.data
    k = len(xs)
    return _finish(out, xs, lambda g: (g,) * k, "stack_sum")


# ---------------------------------------------------------------------------
# attention and convolution


def softmax_rows(x) -> Tensor:
    x = as_tensor(x)
    _need_2d(x, "softmax_rows")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    S = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (S * (g - np.sum(g * S, axis=1, keepdims=True)),)

    return _finish(S, (x,), backward, "softmax_rows")


def conv1d(x, kernel) -> Tensor:
    """Valid stride-1 cross-correlation.

    ``x`` is (channels, length) and ``kernel`` is (out, in, k); the output is
    (out, length - k + 1) with ``out[o, i] = sum_{c,j} kernel[o, c, j] * x[c, i + j]``.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    _need_2d(x, "conv1d")
    if kernel.data.ndim != 3:
        raise DimensionError(f"conv1d kernel must be (out, in, k), got {kernel.shape}")
    C, L = x.shape
    O, Cin, k = kernel.shape
    if Cin != C:
        raise DimensionError(f"conv1d kernel expects {Cin} input channels, input has {C}")
    if k > L:
        raise DimensionError(f"conv1d kernel length {k} exceeds input length {L}")
    Lout = L - k + 1
    X, K = x.data, kernel.data
    out = np.zeros((O, Lout))
    for j in range(k):
        out += K[:, :, j] @ X[:, j : j + Lout]

    def backward(g):
        dx = np.zeros((C, L))
        dk = np.empty((O, C, k))
        for j in range(k):
            dx[:, j : j + Lout] += K[:, :, j].T @ g
            dk[:, :, j] = g @ X[:, j : j + Lout].T
        return dx, dk

    return _finish(out, (x, kernel), backward, "conv1d")


def trans_conv1d(x, kernel) -> Tensor:
    """Stride-1 transposed convolution.

    ``x`` is (in, length) and ``kernel`` is (in, out, k). Every input position
    scatters a kernel-weighted copy into the (out, length + k - 1) result and
    overlaps are summed. For a kernel array ``K`` of shape (a, b, k) this is
    the exact adjoint of ``conv1d`` with the same array read as (out=a, in=b, k).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    _need_2d(x, "trans_conv1d")
    if kernel.data.ndim != 3:
        raise DimensionError(f"trans_conv1d kernel must be (in, out, k), got {kernel.shape}")
    C, L = x.shape
    Cin, O, k = kernel.shape
    if Cin != C:
        raise DimensionError(f"trans_conv1d kernel expects {Cin} input channels, input has {C}")
    X, K = x.data, kernel.data
    out = np.zeros((O, L + k - 1))
    for j in range(k):
        out[:, j : j + L] += K[:, :, j].T @ X

    def backward(g):
        dx = np.zeros((C, L))
        dk = np.empty((C, O, k))
        for j in range(k):
            gj = g[:, j : j + L]
            dx += K[:, :, j] @ gj
            dk[:, :, j] = X @ gj.T
        return dx, dk

    return _finish(out, (x, kernel), backward, "trans_conv1d")


def shared_conv_rows(x, kernel) -> Tensor:
    """Slide one length-k kernel along every row of ``x`` (valid, stride 1)."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    _need_2d(x, "shared_conv_rows")
    if kernel.data.ndim != 1:
        raise DimensionError(f"shared_conv_rows kernel must be 1-D, got {kernel.shape}")
    R, L = x.shape
    k = kernel.shape[0]
    if k > L:
        raise DimensionError(f"kernel length {k} exceeds row length {L}")
    Lout = L - k + 1
    X, K = x.data, kernel.data
    out = np.zeros((R, Lout))
    for j in range(k):
        out += K[j] * X[:, j : j + Lout]

    def backward(g):
        dx = np.zeros((R, L))
        dk = np.empty(k)
        for j in range(k):
            dx[:, j : j + Lout] += K[j] * g
            dk[j] = np.sum(g * X[:, j : j + Lout])
        return dx, dk

    return _finish(out, (x, kernel), backward, "shared_conv_rows")


# ---------------------------------------------------------------------------
# gradients over parameter dictionaries


def value_and_grad(loss_fn: Callable, params: dict[str, np.ndarray], *args, **kwargs):
    """Evaluate ``loss_fn(tracked_params, *args)`` and its gradient dict."""
    tape = Tape()
    tracked = {k: tape.watch(v) for k, v in params.items()}
    loss = loss_fn(tracked, *args, **kwargs)
    if not isinstance(loss, Tensor) or loss._tape is not tape:
        # loss does not touch any parameter
        value = float(as_tensor(loss).data.reshape(-1)[0])
        return value, {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
    grads = tape.gradient(loss, list(tracked.values()))
    return float(loss.data.reshape(-1)[0]), dict(zip(tracked.keys(), grads))


def flatten_grads(grads: dict[str, np.ndarray], names: Sequence[str]) -> np.ndarray:
    return np.concatenate([np.ravel(grads[n]) for n in names]) if names else np.zeros(0)


def unflatten(vec: np.ndarray, like: dict[str, np.ndarray], names: Sequence[str]) -> dict[str, np.ndarray]:
    out, pos = {}, 0
    for n in names:
        shp = np.shape(like[n])
        size = int(np.prod(shp))
        out[n] = np.asarray(vec[pos : pos + size]).reshape(shp)
        pos += size
    if pos != len(vec):
        raise DimensionError(f"flat vector has {len(vec)} entries, parameters need {pos}")
    return out


def per_example_grads(
    loss_fn: Callable,
    params: dict[str, np.ndarray],
    batch: Sequence,
    names: Sequence[str] | None = None,
    return_values: bool = False,
):
    """One flattened gradient per example, each from its own tape.

    ``loss_fn(tracked_params, example)`` must return a single-element tensor.
    ``names`` picks (and orders) the parameters that enter the flat vectors.
    With ``return_values`` the per-example losses are returned as well.
    """
    if len(batch) == 0:
        raise ValueError("per_example_grads needs a nonempty batch")
    names = list(params) if names is None else list(names)
    out, values = [], []
    for i, example in enumerate(batch):
        try:
            value, grads = value_and_grad(loss_fn, params, example)
        except NumericError as exc:
            raise NumericError(f"non-finite value for example {i}: {exc}") from exc
        flat = flatten_grads(grads, names)
        if not np.all(np.isfinite(flat)):
            raise NumericError(f"non-finite gradient for example {i}")
        out.append(flat)
        values.append(value)
    return (out, values) if return_values else out


def numerical_grad(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of one array."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + step
        fp = f(x)
        x[i] = orig - step
        fm = f(x)
        x[i] = orig
        g[i] = (fp - fm) / (2 * step)
    return g
