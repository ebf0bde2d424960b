"""Small encoder-decoder segmentation network with hand-written backprop.

Topology (inputs are ``(B, H, W, C)``; activations are kept channels-first
internally so that neighbourhood gathers copy whole image rows)::

    conv3x3(C_in->8) ReLU -> conv3x3(8->8) ReLU ----------------- skip
      -> maxpool 2x2 -> conv3x3(8->16) ReLU -> nearest upsample 2x   |
      -> concat[up, skip] (24 ch) -> conv3x3(24->8) ReLU -> conv1x1(8->2) -> softmax

Convolutions use zero padding so spatial size is preserved.  The network
outputs the foreground channel of the softmax.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .exceptions import CacheError, FormatError, NonFiniteGradient, ShapeError

# (name, kernel, in_channels or None for C_in, out_channels)
_LAYERS = [
    ("conv1", 3, None, 8),
    ("conv2", 3, 8, 8),
    ("conv3", 3, 8, 16),
    ("conv4", 3, 24, 8),
    ("conv5", 1, 8, 2),
]


def _conv3_cols(x):
    """Column matrix ``(9*C, B*H*W)`` of a zero-padded 3x3 neighbourhood; rows in (i, j, c) order."""
    c, b, h, w = x.shape
    cols = np.zeros((9, c, b, h, w), dtype=x.dtype)
    k = 0
    for i in range(3):
        for j in range(3):
            # Output pixel (y, x) reads input (y + i - 1, x + j - 1); out-of-range stays zero.
            ys, ye = max(0, 1 - i), min(h, h + 1 - i)
            xs, xe = max(0, 1 - j), min(w, w + 1 - j)
            cols[k, :, :, ys:ye, xs:xe] = x[:, :, ys + i - 1 : ye + i - 1, xs + j - 1 : xe + j - 1]
            k += 1
    return cols.reshape(9 * c, b * h * w)


def _conv3_cols_backward(dcols, shape):
    c, b, h, w = shape
    dcols = dcols.reshape(9, c, b, h, w)
    dx = np.zeros(shape, dtype=dcols.dtype)
    k = 0
    for i in range(3):
        for j in range(3):
            ys, ye = max(0, 1 - i), min(h, h + 1 - i)
            xs, xe = max(0, 1 - j), min(w, w + 1 - j)
            dx[:, :, ys + i - 1 : ye + i - 1, xs + j - 1 : xe + j - 1] += dcols[k, :, :, ys:ye, xs:xe]
            k += 1
    return dx


def _flip_kernel(wmat, cin):
    # (9*cin, cout) -> (9*cout, cin) kernel of the adjoint (transposed) convolution.
    cout = wmat.shape[1]
    w = wmat.reshape(3, 3, cin, cout)[::-1, ::-1]
    return np.ascontiguousarray(w.transpose(0, 1, 3, 2).reshape(9 * cout, cin))


def _conv3_input_grad(dout, wmat, cin):
    """Gradient w.r.t. the input of a zero-padded 3x3 convolution."""
    cout, b, h, w = dout.shape
    if cout < cin:
        return (_flip_kernel(wmat, cin).T @ _conv3_cols(dout)).reshape(cin, b, h, w)
    return _conv3_cols_backward(wmat @ dout.reshape(cout, -1), (cin, b, h, w))


def _conv(cols, wmat, bias, out_shape):
    out = wmat.T @ cols
    out += bias[:, None]
    return out.reshape(out_shape)


def _maxpool(x):
    c, b, h, w = x.shape
    win = x.reshape(c, b, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(c, b, h // 2, w // 2, 4)
    idx = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _maxpool_backward(dout, idx, shape):
    c, b, h, w = shape
    dwin = np.zeros(dout.shape + (4,), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    return dwin.reshape(c, b, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(shape)


def _upsample(x):
    return x.repeat(2, axis=2).repeat(2, axis=3)


def _upsample_backward(dout):
    c, b, h, w = dout.shape
    return dout.reshape(c, b, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


@dataclass
class Cache:
    version: int
    acts: dict = field(default_factory=dict)


class TinySegNet:
    """Fixed-topology segmentation network.

    Parameters live in ``params`` (an ordered dict of arrays).  Weights of a
    ``k x k`` convolution are stored as ``(k*k*C_in, C_out)`` in
    ``(row, col, channel)`` order.

    ``prior`` sets the initial foreground probability through the output
    bias (``logit(prior)`` on the foreground channel); ``None`` or 0.5 keeps
    all biases at zero.
    """

    def __init__(self, in_channels: int = 1, seed: Optional[int] = 0, dtype=np.float64, zero: bool = False,
                 prior: Optional[float] = None):
        self.in_channels = int(in_channels)
        self.dtype = np.dtype(dtype)
        self.params: Dict[str, np.ndarray] = {}
        self.version = 0
        rng = np.random.default_rng(seed)
        for name, k, cin, cout in _LAYERS:
            cin = self.in_channels if cin is None else cin
            fan_in = k * k * cin
            limit = math.sqrt(6.0 / fan_in)
            if zero:
                w = np.zeros((fan_in, cout))
            else:
                w = rng.uniform(-limit, limit, size=(fan_in, cout))
            self.params[f"{name}.w"] = w.astype(self.dtype)
            self.params[f"{name}.b"] = np.zeros(cout, dtype=self.dtype)
        if prior is not None and not zero:
            if not 0 < prior < 1:
                raise ValueError(f"prior must lie in (0, 1), got {prior}")
            self.params["conv5.b"][1] = math.log(prior / (1.0 - prior))

    @property
    def param_names(self) -> List[str]:
        return list(self.params)

    def mark_updated(self) -> None:
        """Invalidate caches from earlier forward passes."""
        self.version += 1

    def _check_input(self, x):
        x = np.asarray(x)
        if x.ndim == 3:
            x = x[..., None]
        if x.ndim != 4:
            raise ShapeError(f"expected (B, H, W[, C]) input, got shape {x.shape}")
        if x.shape[-1] != self.in_channels:
            raise ShapeError(f"expected {self.in_channels} channels, got {x.shape[-1]}")
        if x.shape[1] % 2 or x.shape[2] % 2:
            raise ShapeError(f"spatial dims must be even, got {x.shape[1:3]}")
        return x.astype(self.dtype, copy=False)

    def logits(self, x, cache: Optional[Cache] = None):
        """Logits ``(2, B, H, W)`` (channels-first, as used internally)."""
        x = self._check_input(x)
        p = self.params
        a = cache.acts if cache is not None else {}
        xc = np.ascontiguousarray(x.transpose(3, 0, 1, 2))
        b, h, w = x.shape[:3]
        cols1 = _conv3_cols(xc)
        h1 = np.maximum(_conv(cols1, p["conv1.w"], p["conv1.b"], (8, b, h, w)), 0)
        cols2 = _conv3_cols(h1)
        h2 = np.maximum(_conv(cols2, p["conv2.w"], p["conv2.b"], (8, b, h, w)), 0)
        pooled, idx = _maxpool(h2)
        cols3 = _conv3_cols(pooled)
        h3 = np.maximum(_conv(cols3, p["conv3.w"], p["conv3.b"], (16, b, h // 2, w // 2)), 0)
        cat = np.concatenate([_upsample(h3), h2], axis=0)
        cols4 = _conv3_cols(cat)
        h4 = np.maximum(_conv(cols4, p["conv4.w"], p["conv4.b"], (8, b, h, w)), 0)
        z = _conv(h4.reshape(8, -1), p["conv5.w"], p["conv5.b"], (2, b, h, w))
        a.update(cols1=cols1, h1=h1, cols2=cols2, h2=h2, idx=idx, pooled=pooled,
                 cols3=cols3, h3=h3, cols4=cols4, h4=h4)
        return z

    def forward(self, x, keep_cache: bool = True):
        """Foreground probabilities ``(B, H, W)`` and a cache for :meth:`backward`."""
        cache = Cache(self.version) if keep_cache else None
        z = self.logits(x, cache)
        # Two-channel softmax: foreground probability is a logistic of the logit gap.
        gap = z[1] - z[0]
        s = np.empty_like(gap)
        pos = gap >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-gap[pos]))
        e = np.exp(gap[~pos])
        s[~pos] = e / (1.0 + e)
        if cache is not None:
            cache.acts["s"] = s
        return s, cache

    def predict_channels(self, x):
        """Softmax output ``(B, H, W, 2)``: background then foreground."""
        s, _ = self.forward(x, keep_cache=False)
        return np.stack([1.0 - s, s], axis=-1)

    def backward(self, cache: Cache, grad_s) -> Dict[str, np.ndarray]:
        """Parameter gradients given ``dL/ds`` for the foreground probabilities."""
        if cache is None or cache.version != self.version or "s" not in cache.acts:
            raise CacheError("cache does not come from a forward pass with the current weights")
        a, p = cache.acts, self.params
        grad_s = np.asarray(grad_s, dtype=self.dtype)
        s = a["s"]
        if grad_s.shape != s.shape:
            raise ShapeError(f"gradient shape {grad_s.shape} does not match output {s.shape}")
        dgap = (grad_s * s * (1.0 - s)).reshape(1, -1)
        dz = np.concatenate([-dgap, dgap], axis=0)
        g = {}

        h4 = a["h4"]
        g["conv5.w"] = h4.reshape(8, -1) @ dz.T
        g["conv5.b"] = dz.sum(axis=1)
        dh4 = (p["conv5.w"] @ dz).reshape(h4.shape) * (h4 > 0)

        g["conv4.w"] = a["cols4"] @ dh4.reshape(8, -1).T
        g["conv4.b"] = dh4.sum(axis=(1, 2, 3))
        dcat = _conv3_input_grad(dh4, p["conv4.w"], 24)
        h3 = a["h3"]
        dh3 = _upsample_backward(dcat[:16]) * (h3 > 0)
        dh2_skip = dcat[16:]

        g["conv3.w"] = a["cols3"] @ dh3.reshape(16, -1).T
        g["conv3.b"] = dh3.sum(axis=(1, 2, 3))
        dpooled = _conv3_input_grad(dh3, p["conv3.w"], 8)
        h2 = a["h2"]
        dh2 = (_maxpool_backward(dpooled, a["idx"], h2.shape) + dh2_skip) * (h2 > 0)

        g["conv2.w"] = a["cols2"] @ dh2.reshape(8, -1).T
        g["conv2.b"] = dh2.sum(axis=(1, 2, 3))
        h1 = a["h1"]
        dh1 = _conv3_input_grad(dh2, p["conv2.w"], 8) * (h1 > 0)

        g["conv1.w"] = a["cols1"] @ dh1.reshape(8, -1).T
        g["conv1.b"] = dh1.sum(axis=(1, 2, 3))
        return {k: g[k] for k in p}


def forward(net: TinySegNet, images):
    return net.forward(images)


def backward(net: TinySegNet, cache: Cache, grad_wrt_prob):
    return net.backward(cache, grad_wrt_prob)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
    """In-place Adam update with bias correction."""
    for k, gr in grads.items():
        if not np.all(np.isfinite(gr)):
            raise NonFiniteGradient(f"non-finite gradient for {k}")
        if gr.shape != params[k].shape:
            raise ShapeError(f"gradient for {k} has shape {gr.shape}, parameter {params[k].shape}")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for k, gr in grads.items():
        if k not in state.m:
            state.m[k] = np.zeros_like(params[k])
            state.v[k] = np.zeros_like(params[k])
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * gr
        v *= state.beta2
        v += (1.0 - state.beta2) * gr * gr
        params[k] -= (state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(params[k].dtype)


class PlateauHalver:
    """Halve the learning rate after ``patience`` epochs without a strict improvement."""

    def __init__(self, patience: int = 20, factor: float = 0.5):
        self.patience = patience
        self.factor = factor
        self.best = -math.inf
        self.bad_epochs = 0

    def step(self, metric: float, lr: float) -> float:
        if metric > self.best:
            self.best = metric
            self.bad_epochs = 0
            return lr
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.bad_epochs = 0
            return lr * self.factor
        return lr


def lr_on_plateau(history, lr: float, patience: int = 20) -> float:
    """Learning rate after replaying a validation-DSC history through :class:`PlateauHalver`."""
    if len(history) == 0:
        raise ValueError("history must be nonempty")
    halver = PlateauHalver(patience)
    for metric in history:
        lr = halver.step(metric, lr)
    return lr


_CKPT_MAGIC = b"TSNET"


def save_checkpoint(path, net: TinySegNet, state: Optional[AdamState] = None) -> None:
    """Write ``TSNET v1`` header, parameter blob, then Adam moments (little-endian)."""
    state = state or AdamState()
    code = "f32" if net.dtype == np.float32 else "f64"
    dt = np.dtype("<f4" if code == "f32" else "<f8")
    header = f"TSNET v1 {net.in_channels} {code} {state.step} {state.lr!r} {state.beta1!r} {state.beta2!r} {state.eps!r}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for k in net.params:
            fh.write(np.ascontiguousarray(net.params[k], dtype=dt).tobytes())
        for acc in (state.m, state.v):
            for k in net.params:
                arr = acc.get(k, np.zeros_like(net.params[k]))
                fh.write(np.ascontiguousarray(arr, dtype=dt).tobytes())


def load_checkpoint(path):
    """Return ``(net, adam_state)`` from a checkpoint file."""
    with open(path, "rb") as fh:
        data = fh.read()
    nl = data.find(b"\n", 0, 1024)
    if nl < 0:
        raise FormatError("missing checkpoint header")
    tok = data[:nl].split()
    if len(tok) != 9 or tok[0] != _CKPT_MAGIC or tok[1] != b"v1":
        raise FormatError("bad checkpoint magic")
    try:
        c_in, code = int(tok[2]), tok[3].decode()
        step = int(tok[4])
        lr, b1, b2, eps = (float(t) for t in tok[5:9])
    except ValueError:
        raise FormatError("malformed checkpoint header") from None
    if code not in ("f32", "f64"):
        raise FormatError(f"unknown dtype {code!r}")
    dtype = np.float32 if code == "f32" else np.float64
    dt = np.dtype("<f4" if code == "f32" else "<f8")
    net = TinySegNet(c_in, seed=None, dtype=dtype, zero=True)
    sizes = [net.params[k].size for k in net.params]
    blob = data[nl + 1 :]
    if len(blob) != 3 * sum(sizes) * dt.itemsize:
        raise FormatError("checkpoint payload has the wrong size")
    flat = np.frombuffer(blob, dtype=dt).astype(dtype)
    state = AdamState(lr=lr, beta1=b1, beta2=b2, eps=eps, step=step)
    pos = 0
    for target in (net.params, state.m, state.v):
        for k, n in zip(list(net.params), sizes):
            target[k] = flat[pos : pos + n].reshape(net.params[k].shape).copy()
            pos += n
    if step == 0:
        state.m.clear()
        state.v.clear()
    return net, state
