"""Minimal reverse-mode autodiff over numpy arrays.

Implements exactly the operations the reconstruction network needs:
elementwise arithmetic, activations, matmul, reductions, shape ops,
2-D convolutions (full and depthwise), layer norm and nearest upsampling.
float32 is the working precision; float64 is used by grad_check.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, NumericError, ShapeError

# When True every op asserts finiteness of its output.
_DEBUG_CHECKS = False


def set_debug_checks(enabled):
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def _check_finite(arr, where):
    if _DEBUG_CHECKS and not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values produced by {where}")


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """N-dimensional array with reverse-mode gradient tracking.

    Immutable after construction except for grad accumulation.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None, _parents=(), _backward=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(()))

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype):
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad = self.grad + g

    # -- graph ----------------------------------------------------------------

    def backward(self, grad=None):
        """Reverse traversal from this tensor; accumulates into .grad buffers."""
        if grad is None:
            if self.data.size != 1:
                raise ContractError(
                    f"backward() without explicit gradient requires a scalar, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.data.dtype)

        # topological order over the executed-op record
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in seen:
                continue
            if expanded:
                seen.add(id(node))
                order.append(node)
            else:
                stack.append((node, True))
                for p in node._parents:
                    if id(p) not in seen:
                        stack.append((p, False))

        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and node._backward is None:
                node._accumulate(g)
            if node._backward is not None:
                parent_grads = node._backward(g)
                for p, pg in zip(node._parents, parent_grads):
                    if pg is None or not (p.requires_grad or p._backward is not None):
                        continue
                    if id(p) in grads:
                        grads[id(p)] = grads[id(p)] + pg
                    else:
                        grads[id(p)] = pg

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


def _wrap(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _make(data, parents, backward, where):
    _check_finite(data, where)
    tracked = any(p.requires_grad or p._backward is not None for p in parents)
    if not tracked:
        return Tensor(data)
    return Tensor(data, _parents=tuple(parents), _backward=backward)


# -- elementwise ops ---------------------------------------------------------


def add(a, b):
    a, b = _wrap(a), _wrap(b, getattr(a, "dtype", None))
    out = a.data + b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), bw, "add")


def sub(a, b):
    a, b = _wrap(a), _wrap(b, getattr(a, "dtype", None))
    out = a.data - b.data

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), bw, "sub")


def mul(a, b):
    a, b = _wrap(a), _wrap(b, getattr(a, "dtype", None))
    out = a.data * b.data

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), bw, "mul")


def neg(a):
    a = _wrap(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a):
    a = _wrap(a)
    out = np.exp(a.data)

    def bw(g):
        return (g * out,)

    return _make(out, (a,), bw, "exp")


def sigmoid(a):
    a = _wrap(a)
    out = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        return (g * out * (1.0 - out),)

    return _make(out, (a,), bw, "sigmoid")


def silu(a):
    """x * sigmoid(x)."""
    a = _wrap(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = a.data * s

    def bw(g):
        return (g * s * (1.0 + a.data * (1.0 - s)),)

    return _make(out, (a,), bw, "silu")


def softplus(a):
    """log(1 + exp(x)), stable for large |x|."""
    a = _wrap(a)
    out = np.logaddexp(0.0, a.data).astype(a.dtype)

    def bw(g):
        return (g / (1.0 + np.exp(-a.data)),)

    return _make(out, (a,), bw, "softplus")


def abs_(a):
    a = _wrap(a)
    out = np.abs(a.data)

    def bw(g):
        return (g * np.sign(a.data),)

    return _make(out, (a,), bw, "abs")


_EXPM1X_SWITCH = 1e-4


def expm1_over_x(a):
    """(exp(x) - 1) / x with a series branch near zero.

    Series 1 + x/2 + x^2/6 is used for |x| < 1e-4; both branches agree
    there to well under 1e-9.
    """
    a = _wrap(a)
    x = a.data
    ex = np.exp(x)
    small = np.abs(x) < _EXPM1X_SWITCH
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (ex - 1.0) / x
    if small.any():
        xs = x[small]
        out[small] = 1.0 + xs / 2.0 + xs * xs / 6.0
    out = out.astype(x.dtype)

    def bw(g):
        # d/dx (expm1(x)/x) = (exp(x)(x-1)+1)/x^2; series 1/2 + x/3 + x^2/8
        with np.errstate(divide="ignore", invalid="ignore"):
            d = (ex * (x - 1.0) + 1.0) / (x * x)
        small_d = np.abs(x) < 1e-3
        if small_d.any():
            xs = x[small_d]
            d[small_d] = 0.5 + xs / 3.0 + xs * xs / 8.0
        return (g * d.astype(x.dtype),)

    return _make(out, (a,), bw, "expm1_over_x")


# -- matmul -------------------------------------------------------------------


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 1 or b.ndim < 2:
        raise ShapeError(f"matmul requires 2-D-able operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    out = np.matmul(a.data, b.data)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), bw, "matmul")


# -- reductions / shape ops ----------------------------------------------------


def sum_(a, axis=None, keepdims=False):
    a = _wrap(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).astype(a.dtype),)

    return _make(out, (a,), bw, "sum")


def mean(a, axis=None, keepdims=False):
    a = _wrap(a)
    n = a.size if axis is None else np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )
    s = sum_(a, axis, keepdims)
    return mul(s, 1.0 / float(n))


def reshape(a, shape):
    a = _wrap(a)
    out = a.data.reshape(shape)

    def bw(g):
        return (g.reshape(a.shape),)

    return _make(out, (a,), bw, "reshape")


def transpose(a, axes):
    a = _wrap(a)
    axes = tuple(axes)
    out = np.ascontiguousarray(a.data.transpose(axes))
    inv = tuple(np.argsort(axes))

    def bw(g):
        return (g.transpose(inv),)

    return _make(out, (a,), bw, "transpose")


def getitem(a, idx):
    a = _wrap(a)
    out = a.data[idx]

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(out, (a,), bw, "getitem")


def take(a, indices, axis):
    """Gather along one axis; backward scatter-adds."""
    a = _wrap(a)
    indices = np.asarray(indices)
    out = np.take(a.data, indices, axis=axis)

    def bw(g):
        full = np.zeros_like(a.data)
        sl = [slice(None)] * a.ndim
        sl[axis] = indices
        np.add.at(full, tuple(sl), g)
        return (full,)

    return _make(out, (a,), bw, "take")


def permute_index(a, perm, axis, inv=None):
    """Reorder along `axis` by a permutation (no duplicate indices)."""
    a = _wrap(a)
    perm = np.asarray(perm)
    if inv is None:
        inv = np.argsort(perm)
    out = np.take(a.data, perm, axis=axis)

    def bw(g):
        return (np.take(g, inv, axis=axis),)

    return _make(out, (a,), bw, "permute_index")


def concat(tensors, axis=0):
    tensors = [_wrap(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(tensors), bw, "concat")


# -- normalization -------------------------------------------------------------


def layer_norm(x, gamma, beta, eps=1e-5, axis=-1):
    """Zero-mean unit-variance over `axis` per position, then affine."""
    if eps <= 0:
        raise ContractError("layer_norm eps must be > 0")
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    ax = axis % x.ndim
    mu = x.data.mean(axis=ax, keepdims=True)
    var = x.data.var(axis=ax, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    gshape = [1] * x.ndim
    gshape[ax] = x.shape[ax]
    gb = gamma.data.reshape(gshape)
    bb = beta.data.reshape(gshape)
    out = (xhat * gb + bb).astype(x.dtype)

    def bw(g):
        dgamma = (g * xhat).sum(axis=tuple(i for i in range(x.ndim) if i != ax)).reshape(gamma.shape)
        dbeta = g.sum(axis=tuple(i for i in range(x.ndim) if i != ax)).reshape(beta.shape)
        gxh = g * gb
        m1 = gxh.mean(axis=ax, keepdims=True)
        m2 = (gxh * xhat).mean(axis=ax, keepdims=True)
        dx = inv * (gxh - m1 - xhat * m2)
        return dx.astype(x.dtype), dgamma.astype(gamma.dtype), dbeta.astype(beta.dtype)

    return _make(out, (x, gamma, beta), bw, "layer_norm")


# -- convolutions ---------------------------------------------------------------


def _pad_hw(x, p):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def conv2d(x, w, b=None, stride=1, padding=None):
    """Standard 2-D convolution (cross-correlation) over [B,C,H,W]."""
    x, w = _wrap(x), _wrap(w)
    if b is not None:
        b = _wrap(b)
    squeeze = x.ndim == 3
    if squeeze:
        x = reshape(x, (1,) + x.shape)
    Bn, C, H, W = x.shape
    Co, Ci, kh, kw = w.shape
    if Ci != C:
        raise ShapeError(f"conv2d channel mismatch: input {C}, kernel expects {Ci}")
    if padding is None:
        padding = kh // 2
    if kh > H + 2 * padding or kw > W + 2 * padding:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {H + 2 * padding}x{W + 2 * padding}")
    xp = _pad_hw(x.data, padding)
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # [B,C,Ho,Wo,kh,kw]
    Ho, Wo = win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(Bn, Ho, Wo, C * kh * kw)
    wm = w.data.reshape(Co, C * kh * kw)
    out = cols @ wm.T
    if b is not None:
        out = out + b.data
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def bw(g):
        gf = g.transpose(0, 2, 3, 1)  # [B,Ho,Wo,Co]
        gw = np.tensordot(gf, cols, axes=([0, 1, 2], [0, 1, 2])).reshape(w.shape)
        gcols = (gf @ wm).reshape(Bn, Ho, Wo, C, kh, kw)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += (
                    gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                )
        gx = gxp[:, :, padding : padding + H, padding : padding + W] if padding else gxp
        gb = gf.sum(axis=(0, 1, 2)) if b is not None else None
        if b is not None:
            return gx, gw.astype(w.dtype), gb.astype(b.dtype)
        return gx, gw.astype(w.dtype)

    parents = (x, w) if b is None else (x, w, b)
    out_t = _make(out, parents, bw, "conv2d")
    if squeeze:
        out_t = reshape(out_t, out_t.shape[1:])
    return out_t


def dwconv2d(x, kernels, bias=None, padding=None):
    """Depthwise 2-D convolution: one kernel per channel, no cross-channel mixing."""
    x, kernels = _wrap(x), _wrap(kernels)
    if bias is not None:
        bias = _wrap(bias)
    squeeze = x.ndim == 3
    if squeeze:
        x = reshape(x, (1,) + x.shape)
    Bn, C, H, W = x.shape
    Ck, kh, kw = kernels.shape
    if Ck != C:
        raise ShapeError(f"dwconv2d expects one kernel per channel: input {C} channels, {Ck} kernels")
    if padding is None:
        padding = kh // 2
    if kh > H + 2 * padding or kw > W + 2 * padding:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {H + 2 * padding}x{W + 2 * padding}")
    xp = _pad_hw(x.data, padding)
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    Ho, Wo = win.shape[2], win.shape[3]
    out = np.einsum("bchwij,cij->bchw", win, kernels.data, optimize=True)
    if bias is not None:
        out = out + bias.data[:, None, None]
    out = out.astype(x.dtype)

    def bw(g):
        gk = np.einsum("bchwij,bchw->cij", win, g, optimize=True).astype(kernels.dtype)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + Ho, j : j + Wo] += g * kernels.data[None, :, i, j, None, None]
        gx = gxp[:, :, padding : padding + H, padding : padding + W] if padding else gxp
        if bias is not None:
            return gx, gk, g.sum(axis=(0, 2, 3)).astype(bias.dtype)
        return gx, gk

    parents = (x, kernels) if bias is None else (x, kernels, bias)
    out_t = _make(out, parents, bw, "dwconv2d")
    if squeeze:
        out_t = reshape(out_t, out_t.shape[1:])
    return out_t


def upsample_nearest2x(x):
    """Nearest-neighbour 2x spatial upsampling of [B,C,H,W]."""
    x = _wrap(x)
    Bn, C, H, W = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def bw(g):
        return (g.reshape(Bn, C, H, 2, W, 2).sum(axis=(3, 5)),)

    return _make(out, (x,), bw, "upsample_nearest2x")


# -- gradient checking -----------------------------------------------------------


def backward(loss):
    """Module-level alias: run reverse traversal from a scalar loss."""
    loss.backward()


def numeric_vs_analytic(fn, arrays, h=1e-5, rng=None):
    """Max relative error between analytic and central-difference gradients.

    `fn` maps Tensors to a Tensor; `arrays` are float64 numpy inputs. The
    scalar probe is sum(output * r) for a fixed random cotangent r.
    """
    rng = rng or np.random.default_rng(0)
    leaves = [Tensor(a.astype(np.float64), requires_grad=True) for a in arrays]
    out = fn(*leaves)
    r = rng.standard_normal(out.shape)

    def probe(vals):
        ts = [Tensor(v.astype(np.float64)) for v in vals]
        return float((fn(*ts).data * r).sum())

    loss = sum_(mul(out, Tensor(r)))
    loss.backward()

    errs = []
    for i, leaf in enumerate(leaves):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        numeric = np.zeros_like(leaf.data)
        flat_n = numeric.reshape(-1)
        base = [a.copy() for a in arrays]
        flat = base[i].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = probe(base)
            flat[j] = orig - h
            fm = probe(base)
            flat[j] = orig
            flat_n[j] = (fp - fm) / (2 * h)
        scale = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-8)
        errs.append(float(np.abs(analytic - numeric).max() / scale))
    return errs


_GRADCHECK_CASES = {}


def register_gradcheck_case(name, builder):
    """builder(rng) -> (fn, [float64 input arrays])."""
    _GRADCHECK_CASES[name] = builder


def gradcheck_case_names():
    return sorted(_GRADCHECK_CASES)


def grad_check(op_name, input_spec=None, tolerance=1e-4, seed=0):
    """Check one registered op's gradients against central differences.

    Returns a dict with per-input max relative errors; raises KeyError for
    unknown ops and AssertionError when the tolerance is exceeded.
    """
    if op_name not in _GRADCHECK_CASES:
        raise KeyError(f"unknown op for grad_check: {op_name!r}")
    rng = np.random.default_rng(seed)
    fn, arrays = _GRADCHECK_CASES[op_name](rng)
    if input_spec is not None:
        arrays = [rng.uniform(-2, 2, size=s) for s in input_spec]
    errs = numeric_vs_analytic(fn, arrays, rng=rng)
    report = {"op": op_name, "per_input_max_rel_error": errs, "max": max(errs)}
    assert report["max"] < tolerance, f"grad_check({op_name}) failed: {report}"
    return report


def _u(rng, *shape):
    return rng.uniform(-2.0, 2.0, size=shape)


def _register_default_cases():
    reg = register_gradcheck_case
    reg("add", lambda rng: (add, [_u(rng, 3, 4), _u(rng, 3, 4)]))
    reg("add_broadcast", lambda rng: (add, [_u(rng, 3, 4), _u(rng, 4)]))
    reg("sub", lambda rng: (sub, [_u(rng, 3, 4), _u(rng, 3, 4)]))
    reg("mul", lambda rng: (mul, [_u(rng, 3, 4), _u(rng, 3, 4)]))
    reg("mul_broadcast", lambda rng: (mul, [_u(rng, 2, 3, 4), _u(rng, 3, 1)]))
    reg("neg", lambda rng: (neg, [_u(rng, 5)]))
    reg("exp", lambda rng: (exp, [_u(rng, 5)]))
    reg("sigmoid", lambda rng: (sigmoid, [_u(rng, 8)]))
    reg("silu", lambda rng: (silu, [_u(rng, 8)]))
    reg("softplus", lambda rng: (softplus, [_u(rng, 8)]))
    # keep abs inputs away from the kink at 0
    reg("abs", lambda rng: (abs_, [np.sign(_u(rng, 8)) * (0.1 + np.abs(_u(rng, 8)))]))
    reg("expm1_over_x", lambda rng: (expm1_over_x, [_u(rng, 8)]))
    reg("matmul", lambda rng: (matmul, [_u(rng, 3, 4), _u(rng, 4, 2)]))
    reg("matmul_batched", lambda rng: (matmul, [_u(rng, 2, 3, 4), _u(rng, 4, 2)]))
    reg("sum", lambda rng: (lambda t: sum_(t, axis=1), [_u(rng, 3, 4)]))
    reg("mean", lambda rng: (lambda t: mean(t, axis=0), [_u(rng, 3, 4)]))
    reg("reshape", lambda rng: (lambda t: reshape(t, (4, 3)), [_u(rng, 3, 4)]))
    reg("transpose", lambda rng: (lambda t: transpose(t, (1, 0, 2)), [_u(rng, 2, 3, 4)]))
    reg("getitem", lambda rng: (lambda t: t[1:3, ::2], [_u(rng, 4, 6)]))
    reg("take", lambda rng: (lambda t: take(t, np.array([2, 0, 1, 2]), axis=0), [_u(rng, 3, 4)]))
    reg("concat", lambda rng: (lambda a, b: concat([a, b], axis=1), [_u(rng, 2, 3), _u(rng, 2, 2)]))
    reg(
        "layer_norm",
        lambda rng: (
            lambda x, g, b: layer_norm(x, g, b, eps=1e-5, axis=-1),
            [_u(rng, 2, 5), _u(rng, 5), _u(rng, 5)],
        ),
    )
    reg(
        "conv2d",
        lambda rng: (
            lambda x, w, b: conv2d(x, w, b, stride=1, padding=1),
            [_u(rng, 2, 3, 5, 5), _u(rng, 4, 3, 3, 3), _u(rng, 4)],
        ),
    )
    reg(
        "conv2d_strided",
        lambda rng: (
            lambda x, w, b: conv2d(x, w, b, stride=2, padding=1),
            [_u(rng, 1, 2, 6, 6), _u(rng, 3, 2, 3, 3), _u(rng, 3)],
        ),
    )
    reg(
        "dwconv2d",
        lambda rng: (
            lambda x, k, b: dwconv2d(x, k, b),
            [_u(rng, 1, 2, 5, 5), _u(rng, 2, 3, 3), _u(rng, 2)],
        ),
    )
    reg("upsample_nearest2x", lambda rng: (upsample_nearest2x, [_u(rng, 1, 2, 3, 3)]))


_register_default_cases()
