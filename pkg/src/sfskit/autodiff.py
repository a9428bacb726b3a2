"""Reverse-mode automatic differentiation over dense numpy arrays.

The operator inventory is closed: convolutions (k in {1, 3, 4, 7}),
strided deconvolution (k=4, stride 2), batch normalization, (leaky) ReLU,
bilinear 2x upsampling, global average pooling, fully connected layers,
channel concatenation, elementwise arithmetic, and the loss heads
(masked L1, mean squared error, SH shading). Nothing else is supported.

Execution records onto a thread-local :class:`Tape`; ``tape.backward(loss)``
replays the records in exact reverse execution order and accumulates (+=)
each tensor's gradient over all of its consumers. Without an active tape,
ops run as plain numpy (inference mode).

Maps are laid out (batch, channels, height, width); feature vectors are
(batch, features). Compute follows the input dtype: float32 in normal use,
float64 when verifying gradients.

Padding is fixed per kernel so spatial arithmetic is exact: (k-1)/2 for
odd kernels (same resolution at stride 1, ceil(H/2) at stride 2) and
pad 1 for the k=4 stride-2 pair (exact halving; its transpose exactly
doubles).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .shcore import SH_C0, SH_C1, SH_C20, SH_C21, SH_C22

SUPPORTED_KERNELS = (1, 3, 4, 7)


# ---------------------------------------------------------------------------
# Tensors and the tape


class Tensor:
    """A dense numeric array participating in differentiation."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """A named trainable tensor with Adam moment accumulators."""

    __slots__ = ("name", "m", "v", "t")

    def __init__(self, name: str, data):
        super().__init__(np.asarray(data), requires_grad=True)
        self.name = name
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.t = 0


class _Node:
    __slots__ = ("out", "backward_fn")

    def __init__(self, out: Tensor, backward_fn):
        self.out = out
        self.backward_fn = backward_fn


_tls = threading.local()


def _active_tape():
    return getattr(_tls, "tape", None)


class Tape:
    """Ordered record of executed operations, confined to one worker."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._spent = False

    def __enter__(self):
        if _active_tape() is not None:
            raise RuntimeError("a tape is already active on this thread")
        _tls.tape = self
        return self

    def __exit__(self, *exc):
        _tls.tape = None
        return False

    def backward(self, out: Tensor, seed: np.ndarray | None = None) -> None:
        """Propagate gradients from ``out`` to everything that produced it.

        ``seed`` is the upstream gradient; it defaults to 1 and is then only
        valid for scalar outputs.
        """
        if self._spent:
            raise RuntimeError("tape already consumed by a previous backward()")
        self._spent = True
        if seed is None:
            if out.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            seed = np.ones_like(out.data)
        _accum(out, np.asarray(seed, dtype=out.data.dtype))
        for node in reversed(self.nodes):
            if node.out.grad is None:
                continue
            node.backward_fn(node.out.grad)


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Convenience wrapper: run backward on the given or active tape."""
    tape = tape if tape is not None else _active_tape()
    if tape is None:
        raise RuntimeError("no tape to run backward on")
    tape.backward(loss)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _record(out: Tensor, inputs, backward_fn) -> Tensor:
    tape = _active_tape()
    if tape is not None and any(isinstance(i, Tensor) and i.requires_grad for i in inputs):
        out.requires_grad = True
        tape.nodes.append(_Node(out, backward_fn))
    return out


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


# ---------------------------------------------------------------------------
# Convolution machinery (im2col + GEMM)


def _conv_pad(k: int, stride: int) -> int:
    if k not in SUPPORTED_KERNELS:
        raise ValueError(f"kernel size {k} not in supported set {SUPPORTED_KERNELS}")
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    if k == 4:
        if stride != 2:
            raise ValueError("k=4 kernels are only defined at stride 2")
        return 1
    return (k - 1) // 2


def _conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> tuple[np.ndarray, int, int]:
    """Patches of x as a (B*Ho*Wo, C*k*k) matrix."""
    b, c, h, w = x.shape
    ho = _conv_out_size(h, k, stride, pad)
    wo = _conv_out_size(w, k, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]                      # (B, C, Ho, Wo, k, k)
    col = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * k * k)
    return col, ho, wo


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int, pad: int) -> np.ndarray:
    b = x.shape[0]
    cout, cin, k, _ = w.shape
    col, ho, wo = _im2col(x, k, stride, pad)
    y = col @ w.reshape(cout, cin * k * k).T
    return np.ascontiguousarray(y.reshape(b, ho, wo, cout).transpose(0, 3, 1, 2))


def _conv_dw(x: np.ndarray, dy: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    b, cout, ho, wo = dy.shape
    cin = x.shape[1]
    col, _, _ = _im2col(x, k, stride, pad)
    dy_mat = dy.transpose(0, 2, 3, 1).reshape(b * ho * wo, cout)
    return (dy_mat.T @ col).reshape(cout, cin, k, k)


def _conv_dx(dy: np.ndarray, w: np.ndarray, x_shape: tuple, stride: int, pad: int) -> np.ndarray:
    """Adjoint of _conv_forward with respect to its input."""
    b, cin, h, w_sz = x_shape
    cout, _, k, _ = w.shape
    ho, wo = dy.shape[2], dy.shape[3]
    dy_mat = dy.transpose(0, 2, 3, 1).reshape(b * ho * wo, cout)
    dcol = dy_mat @ w.reshape(cout, cin * k * k)             # (N, C*k*k)
    dcol = dcol.reshape(b, ho, wo, cin, k, k)
    dxp = np.zeros((b, cin, h + 2 * pad, w_sz + 2 * pad), dtype=dy.dtype)
    for ki in range(k):
        for kj in range(k):
            dxp[:, :, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride] += (
                dcol[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
            )
    if pad:
        return dxp[:, :, pad:-pad, pad:-pad]
    return dxp


def conv2d(x, weight, bias=None, stride: int = 1) -> Tensor:
    """2-D cross-correlation. weight is (C_out, C_in, k, k); padding is
    implied by the kernel size (see module docstring)."""
    xd, wd = _data(x), _data(weight)
    if xd.ndim != 4 or wd.ndim != 4:
        raise ValueError("conv2d expects (B, C, H, W) input and (Co, Ci, k, k) weight")
    if xd.shape[1] != wd.shape[1]:
        raise ValueError(f"channel mismatch: input has {xd.shape[1]}, weight expects {wd.shape[1]}")
    if wd.shape[2] != wd.shape[3]:
        raise ValueError("only square kernels are supported")
    k = wd.shape[2]
    pad = _conv_pad(k, stride)
    y = _conv_forward(xd, wd, stride, pad)
    if bias is not None:
        y += _data(bias).reshape(1, -1, 1, 1)
    out = Tensor(y)

    def bwd(g):
        if isinstance(x, Tensor) and x.requires_grad:
            _accum(x, _conv_dx(g, wd, xd.shape, stride, pad))
        if isinstance(weight, Tensor) and weight.requires_grad:
            _accum(weight, _conv_dw(xd, g, k, stride, pad))
        if bias is not None and isinstance(bias, Tensor) and bias.requires_grad:
            _accum(bias, g.sum(axis=(0, 2, 3)))

    return _record(out, (x, weight, bias), bwd)


def conv_transpose2d(x, weight, bias=None, stride: int = 2) -> Tensor:
    """Strided deconvolution, the exact adjoint of the k=4/stride-2
    convolution; doubles H and W. weight is (C_in, C_out, 4, 4)."""
    xd, wd = _data(x), _data(weight)
    if stride != 2 or wd.shape[2:] != (4, 4):
        raise ValueError("conv_transpose2d is defined for k=4, stride=2 only")
    if xd.shape[1] != wd.shape[0]:
        raise ValueError(f"channel mismatch: input has {xd.shape[1]}, weight expects {wd.shape[0]}")
    b, cin, h, w_sz = xd.shape
    cout = wd.shape[1]
    out_shape = (b, cout, 2 * h, 2 * w_sz)
    # Forward of the transpose = input-backward of the matching conv.
    y = _conv_dx(xd, wd, out_shape, stride=2, pad=1)
    if bias is not None:
        y += _data(bias).reshape(1, -1, 1, 1)
    out = Tensor(y)

    def bwd(g):
        if isinstance(x, Tensor) and x.requires_grad:
            _accum(x, _conv_forward(g, wd, stride=2, pad=1))
        if isinstance(weight, Tensor) and weight.requires_grad:
            _accum(weight, _conv_dw(g, xd, k=4, stride=2, pad=1))
        if bias is not None and isinstance(bias, Tensor) and bias.requires_grad:
            _accum(bias, g.sum(axis=(0, 2, 3)))

    return _record(out, (x, weight, bias), bwd)


# ---------------------------------------------------------------------------
# Normalization and activations


def batch_norm(
    x,
    gamma,
    beta,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization.

    Train mode normalizes by batch statistics (biased variance) and updates
    the running arrays in place; eval mode uses the running statistics.
    """
    xd = _data(x)
    axes = (0, 2, 3) if xd.ndim == 4 else (0,)
    shape = (1, -1, 1, 1) if xd.ndim == 4 else (1, -1)
    gd = _data(gamma).reshape(shape)
    bd = _data(beta).reshape(shape)

    if train:
        mean = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean, var = running_mean, running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mean.reshape(shape)) * inv_std.reshape(shape)
    out = Tensor(gd * xhat + bd)

    def bwd(g):
        if isinstance(gamma, Tensor) and gamma.requires_grad:
            _accum(gamma, (g * xhat).sum(axis=axes))
        if isinstance(beta, Tensor) and beta.requires_grad:
            _accum(beta, g.sum(axis=axes))
        if isinstance(x, Tensor) and x.requires_grad:
            if train:
                dxhat = g * gd
                dx = (
                    dxhat
                    - dxhat.mean(axis=axes).reshape(shape)
                    - xhat * (dxhat * xhat).mean(axis=axes).reshape(shape)
                ) * inv_std.reshape(shape)
                _accum(x, dx)
            else:
                _accum(x, g * gd * inv_std.reshape(shape))

    return _record(out, (x, gamma, beta), bwd)


def relu(x) -> Tensor:
    return leaky_relu(x, 0.0)


def leaky_relu(x, slope: float) -> Tensor:
    xd = _data(x)
    pos = xd > 0
    out = Tensor(np.where(pos, xd, slope * xd))

    def bwd(g):
        if isinstance(x, Tensor) and x.requires_grad:
            _accum(x, np.where(pos, g, slope * g))

    return _record(out, (x,), bwd)


# ---------------------------------------------------------------------------
# Resampling, pooling, reshaping


_upsample_cache: dict = {}


def _upsample_matrix(n: int, dtype) -> np.ndarray:
    """(2n, n) interpolation matrix: output i samples input at
    (i + 0.5)/2 - 0.5, clamped to the valid range (align-corners-false,
    edge-replicating)."""
    key = (n, np.dtype(dtype).str)
    mat = _upsample_cache.get(key)
    if mat is None:
        mat = np.zeros((2 * n, n), dtype=dtype)
        src = np.clip((np.arange(2 * n) + 0.5) / 2.0 - 0.5, 0.0, n - 1.0)
        i0 = np.floor(src).astype(int)
        i1 = np.minimum(i0 + 1, n - 1)
        w1 = src - i0
        for i in range(2 * n):
            mat[i, i0[i]] += 1.0 - w1[i]
            mat[i, i1[i]] += w1[i]
        _upsample_cache[key] = mat
    return mat


def bilinear_upsample2x(x) -> Tensor:
    """Double H and W by bilinear interpolation (align-corners-false)."""
    xd = _data(x)
    b, c, h, w = xd.shape
    uh = _upsample_matrix(h, xd.dtype)
    uw = _upsample_matrix(w, xd.dtype)
    t = np.matmul(uh, xd.reshape(b * c, h, w))
    y = np.matmul(t, uw.T).reshape(b, c, 2 * h, 2 * w)
    out = Tensor(y)

    def bwd(g):
        if isinstance(x, Tensor) and x.requires_grad:
            gt = np.matmul(uh.T, g.reshape(b * c, 2 * h, 2 * w))
            _accum(x, np.matmul(gt, uw).reshape(b, c, h, w))

    return _record(out, (x,), bwd)


def global_avg_pool(x) -> Tensor:
    """(B, C, H, W) -> (B, C) spatial mean."""
    xd = _data(x)
    b, c, h, w = xd.shape
    out = Tensor(xd.mean(axis=(2, 3)))

    def bwd(g):
        if isinstance(x, Tensor) and x.requires_grad:
            _accum(x, np.broadcast_to(g[:, :, None, None] / (h * w), xd.shape).copy())

    return _record(out, (x,), bwd)


def flatten(x) -> Tensor:
    xd = _data(x)
    b = xd.shape[0]
    out = Tensor(xd.reshape(b, -1))

    def bwd(g):
        if isinstance(x, Tensor) and x.requires_grad:
            _accum(x, g.reshape(xd.shape))

    return _record(out, (x,), bwd)


def broadcast_spatial(x, h: int, w: int) -> Tensor:
    """(B, C) -> (B, C, h, w) by replication (the parameter-free projection
    of a feature vector onto a spatial grid)."""
    xd = _data(x)
    out = Tensor(np.broadcast_to(xd[:, :, None, None], xd.shape + (h, w)).copy())

    def bwd(g):
        if isinstance(x, Tensor) and x.requires_grad:
            _accum(x, g.sum(axis=(2, 3)))

    return _record(out, (x,), bwd)


def fully_connected(x, weight, bias) -> Tensor:
    """(B, F) @ (O, F)^T + bias."""
    xd, wd = _data(x), _data(weight)
    if xd.shape[1] != wd.shape[1]:
        raise ValueError(f"feature mismatch: input has {xd.shape[1]}, weight expects {wd.shape[1]}")
    out = Tensor(xd @ wd.T + _data(bias))

    def bwd(g):
        if isinstance(x, Tensor) and x.requires_grad:
            _accum(x, g @ wd)
        if isinstance(weight, Tensor) and weight.requires_grad:
            _accum(weight, g.T @ xd)
        if isinstance(bias, Tensor) and bias.requires_grad:
            _accum(bias, g.sum(axis=0))

    return _record(out, (x, weight, bias), bwd)


def concat_channels(*xs) -> Tensor:
    datas = [_data(x) for x in xs]
    out = Tensor(np.concatenate(datas, axis=1))
    splits = np.cumsum([d.shape[1] for d in datas])[:-1]

    def bwd(g):
        for x, piece in zip(xs, np.split(g, splits, axis=1)):
            if isinstance(x, Tensor) and x.requires_grad:
                _accum(x, piece)

    return _record(out, xs, bwd)


# ---------------------------------------------------------------------------
# Elementwise arithmetic


def add(x, y) -> Tensor:
    xd, yd = _data(x), _data(y)
    if xd.shape != yd.shape:
        raise ValueError(f"add shape mismatch: {xd.shape} vs {yd.shape}")
    out = Tensor(xd + yd)

    def bwd(g):
        if isinstance(x, Tensor) and x.requires_grad:
            _accum(x, g)
        if isinstance(y, Tensor) and y.requires_grad:
            _accum(y, g)

    return _record(out, (x, y), bwd)


def sub(x, y) -> Tensor:
    xd, yd = _data(x), _data(y)
    if xd.shape != yd.shape:
        raise ValueError(f"sub shape mismatch: {xd.shape} vs {yd.shape}")
    out = Tensor(xd - yd)

    def bwd(g):
        if isinstance(x, Tensor) and x.requires_grad:
            _accum(x, g)
        if isinstance(y, Tensor) and y.requires_grad:
            _accum(y, -g)

    return _record(out, (x, y), bwd)


def mul(x, y) -> Tensor:
    xd, yd = _data(x), _data(y)
    if xd.shape != yd.shape:
        raise ValueError(f"mul shape mismatch: {xd.shape} vs {yd.shape}")
    out = Tensor(xd * yd)

    def bwd(g):
        if isinstance(x, Tensor) and x.requires_grad:
            _accum(x, g * yd)
        if isinstance(y, Tensor) and y.requires_grad:
            _accum(y, g * xd)

    return _record(out, (x, y), bwd)


def scale(x, alpha: float) -> Tensor:
    xd = _data(x)
    out = Tensor(xd * xd.dtype.type(alpha))

    def bwd(g):
        if isinstance(x, Tensor) and x.requires_grad:
            _accum(x, g * xd.dtype.type(alpha))

    return _record(out, (x,), bwd)


# ---------------------------------------------------------------------------
# Rendering head and losses


def normalize_vec3(x, eps: float = 1e-6) -> Tensor:
    """Normalize (B, 3, H, W) vectors per pixel by max(|v|, eps)."""
    xd = _data(x)
    if xd.ndim != 4 or xd.shape[1] != 3:
        raise ValueError(f"normalize_vec3 expects (B, 3, H, W), got {xd.shape}")
    r = np.sqrt((xd * xd).sum(axis=1, keepdims=True))
    denom = np.maximum(r, eps)
    n = xd / denom
    out = Tensor(n)
    clamped = r <= eps

    def bwd(g):
        if isinstance(x, Tensor) and x.requires_grad:
            proj = (g * n).sum(axis=1, keepdims=True)
            dx = np.where(clamped, g / eps, (g - n * proj) / denom)
            _accum(x, dx)

    return _record(out, (x,), bwd)


def sh_shading(normals, light) -> Tensor:
    """Shading from per-pixel vectors (B, 3, H, W) and lighting (B, 27).

    Channel c of the output is the dot product of the 9-term SH basis of
    the vector with coefficients light[:, 9c:9c+9]. The basis polynomials
    are evaluated as written, so the input need not be unit length; the
    model feeds normalized vectors.
    """
    nd, ld = _data(normals), _data(light)
    if nd.ndim != 4 or nd.shape[1] != 3:
        raise ValueError(f"sh_shading expects (B, 3, H, W) vectors, got {nd.shape}")
    if ld.ndim != 2 or ld.shape[1] != 27 or ld.shape[0] != nd.shape[0]:
        raise ValueError(f"sh_shading expects (B, 27) lighting, got {ld.shape}")
    b = nd.shape[0]
    x, y, z = nd[:, 0], nd[:, 1], nd[:, 2]
    basis = np.empty((b, 9) + x.shape[1:], dtype=nd.dtype)
    basis[:, 0] = SH_C0
    basis[:, 1] = SH_C1 * z
    basis[:, 2] = SH_C1 * x
    basis[:, 3] = SH_C1 * y
    basis[:, 4] = SH_C20 * (3.0 * z * z - 1.0)
    basis[:, 5] = SH_C21 * x * z
    basis[:, 6] = SH_C21 * y * z
    basis[:, 7] = SH_C22 * (x * x - y * y)
    basis[:, 8] = SH_C21 * x * y
    lmat = ld.reshape(b, 3, 9)
    out = Tensor(np.einsum("bkhw,bck->bchw", basis, lmat))

    def bwd(g):
        if isinstance(light, Tensor) and light.requires_grad:
            _accum(light, np.einsum("bchw,bkhw->bck", g, basis).reshape(b, 27))
        if isinstance(normals, Tensor) and normals.requires_grad:
            gk = np.einsum("bchw,bck->bkhw", g, lmat)
            dx = SH_C1 * gk[:, 2] + SH_C21 * (z * gk[:, 5] + y * gk[:, 8]) + 2.0 * SH_C22 * x * gk[:, 7]
            dy = SH_C1 * gk[:, 3] + SH_C21 * (z * gk[:, 6] + x * gk[:, 8]) - 2.0 * SH_C22 * y * gk[:, 7]
            dz = SH_C1 * gk[:, 1] + 6.0 * SH_C20 * z * gk[:, 4] + SH_C21 * (x * gk[:, 5] + y * gk[:, 6])
            _accum(normals, np.stack([dx, dy, dz], axis=1))

    return _record(out, (normals, light), bwd)


def masked_l1(x, y, mask: np.ndarray) -> Tensor:
    """Mean absolute difference over mask-selected elements.

    mask broadcasts against x (typically (B, 1, H, W) against (B, C, H, W));
    the mean divides by the number of selected elements after broadcasting.
    """
    xd, yd = _data(x), _data(y)
    m = np.asarray(mask, dtype=xd.dtype)
    denom = float(np.broadcast_to(m, xd.shape).sum())
    if denom == 0:
        raise ValueError("masked_l1 over an empty mask")
    diff = xd - yd
    out = Tensor(np.asarray((np.abs(diff) * m).sum() / denom, dtype=xd.dtype))

    def bwd(g):
        d = g * np.sign(diff) * m / xd.dtype.type(denom)
        if isinstance(x, Tensor) and x.requires_grad:
            _accum(x, d)
        if isinstance(y, Tensor) and y.requires_grad:
            _accum(y, -d)

    return _record(out, (x, y), bwd)


def l2_loss(x, y) -> Tensor:
    """Mean squared difference over all elements."""
    xd, yd = _data(x), _data(y)
    diff = xd - yd
    n = diff.size
    out = Tensor(np.asarray((diff * diff).sum() / n, dtype=xd.dtype))

    def bwd(g):
        d = g * 2.0 * diff / xd.dtype.type(n)
        if isinstance(x, Tensor) and x.requires_grad:
            _accum(x, d)
        if isinstance(y, Tensor) and y.requires_grad:
            _accum(y, -d)

    return _record(out, (x, y), bwd)


# ---------------------------------------------------------------------------
# Optimization


def adam_step(
    params,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One Adam update over parameters with populated gradients.

    A missing gradient counts as zero (the moments still decay and the
    step counter still advances, keeping identical parameters identical).
    """
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        p.t += 1
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * (g * g)
        mhat = p.m / (1.0 - beta1**p.t)
        vhat = p.v / (1.0 - beta2**p.t)
        p.data = p.data - p.data.dtype.type(lr) * mhat / (np.sqrt(vhat) + eps)


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# Gradient verification


@dataclass
class GradcheckReport:
    """Outcome of one finite-difference comparison."""

    passed: bool
    max_rel_err: float
    per_input: list = field(default_factory=list)


def gradcheck(fn, inputs, tol: float = 1e-5, step: float = 1e-4, seed: int = 0) -> GradcheckReport:
    """Compare analytic gradients of ``fn`` against central differences.

    ``fn`` maps float64 Tensors to one Tensor; ``inputs`` are numpy arrays.
    The output is contracted with a fixed random cotangent so non-scalar
    ops check every output path. Per element the error bound is
    |analytic - numeric| <= tol * max(1, |analytic|, |numeric|); the unit
    floor keeps exactly-zero gradients checkable.
    """
    rng = np.random.default_rng(seed)
    arrays = [np.asarray(a, dtype=np.float64) for a in inputs]

    with Tape() as tape:
        tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
        out = fn(*tensors)
        cot = rng.standard_normal(out.data.shape)
        tape.backward(out, seed=cot)
    analytic = [
        t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors
    ]

    def value_at(point):
        res = fn(*[Tensor(p) for p in point])
        return float((res.data * cot).sum())

    report = GradcheckReport(passed=True, max_rel_err=0.0)
    for idx, base in enumerate(arrays):
        num = np.zeros_like(base)
        flat = base.reshape(-1)
        nflat = num.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            hi = value_at(arrays)
            flat[j] = orig - step
            lo = value_at(arrays)
            flat[j] = orig
            nflat[j] = (hi - lo) / (2.0 * step)
        a = analytic[idx]
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(num)))
        rel = np.abs(a - num) / denom
        worst = float(rel.max()) if rel.size else 0.0
        report.per_input.append(worst)
        report.max_rel_err = max(report.max_rel_err, worst)
        if worst > tol:
            report.passed = False
    return report
