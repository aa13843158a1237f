"""Neural network layers with exact analytic backprop, numpy only.

Tensors are C-contiguous numpy arrays in NCHW layout. Every layer caches
what its backward pass needs during forward; backward raises if called
without a cached forward. Layers are single-writer: one forward/backward
pair at a time per instance.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Conv2D", "BatchNorm2D", "ReLU", "MaxPool2", "GlobalAvgPool", "Dense",
    "softmax", "softmax_cross_entropy", "he_uniform",
]


def he_uniform(shape, fan_in: int, rng: np.random.Generator, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    """Common bookkeeping: ordered params/grads plus optional buffers."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self._cache = None

    def _need_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{type(self).__name__}.backward called before forward")
        return self._cache

    def state_tensors(self):
        yield from self.params.items()
        yield from self.buffers.items()


class Conv2D(Layer):
    """Cross-correlation with stride and 'same'/'valid' padding (im2col)."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int = 1,
                 padding: str = "same", rng: np.random.Generator | None = None,
                 dtype=np.float32):
        super().__init__()
        if padding not in ("same", "valid"):
            raise ValueError("padding must be 'same' or 'valid'")
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride = kernel, stride
        self.pad = (kernel - 1) // 2 if padding == "same" else 0
        rng = rng or np.random.default_rng(0)
        self.params["w"] = he_uniform((out_ch, in_ch, kernel, kernel),
                                      in_ch * kernel * kernel, rng, dtype)
        self.params["b"] = np.zeros(out_ch, dtype=dtype)

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        k, s, p = self.kernel, self.stride, self.pad
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def _im2col(self, x: np.ndarray):
        k, s, p = self.kernel, self.stride, self.pad
        if p:
            x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        B, C, Hp, Wp = x.shape
        if Hp < k or Wp < k:
            raise ValueError(f"spatial size {Hp}x{Wp} smaller than kernel {k}")
        OH, OW = (Hp - k) // s + 1, (Wp - k) // s + 1
        s0, s1, s2, s3 = x.strides
        patches = np.lib.stride_tricks.as_strided(
            x, (B, OH, OW, C, k, k), (s0, s2 * s, s3 * s, s1, s2, s3),
            writeable=False)
        cols = patches.reshape(B * OH * OW, C * k * k)
        return np.ascontiguousarray(cols), (B, C, Hp, Wp), (OH, OW)

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ValueError(
                f"expected NCHW input with {self.in_ch} channels, got {x.shape}"
            )
        cols, padded_shape, (OH, OW) = self._im2col(x)
        w2 = self.params["w"].reshape(self.out_ch, -1)
        out = cols @ w2.T + self.params["b"]
        B = x.shape[0]
        self._cache = (cols, padded_shape, (OH, OW), x.shape)
        return out.reshape(B, OH, OW, self.out_ch).transpose(0, 3, 1, 2)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        cols, (B, C, Hp, Wp), (OH, OW), x_shape = self._need_cache()
        k, s, p = self.kernel, self.stride, self.pad
        g2 = grad_out.transpose(0, 2, 3, 1).reshape(B * OH * OW, self.out_ch)
        self.grads["w"] = (g2.T @ cols).reshape(self.params["w"].shape)
        self.grads["b"] = g2.sum(axis=0)
        gcols = (g2 @ self.params["w"].reshape(self.out_ch, -1))
        gcols = gcols.reshape(B, OH, OW, C, k, k)
        gx = np.zeros((B, C, Hp, Wp), dtype=grad_out.dtype)
        for i in range(k):
            for j in range(k):
                gx[:, :, i:i + s * OH:s, j:j + s * OW:s] += \
                    gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        if p:
            gx = gx[:, :, p:Hp - p, p:Wp - p]
        return np.ascontiguousarray(gx.reshape(x_shape))


class BatchNorm2D(Layer):
    """Per-channel batch normalisation over (N, H, W)."""

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.9,
                 dtype=np.float32):
        super().__init__()
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_var"] = np.ones(channels, dtype=dtype)
        # the EMA warm-starts at the first observed batch so inference-mode
        # statistics are usable from the first epoch
        self._stats_seen = False

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ValueError(f"expected NCHW with {self.channels} channels, got {x.shape}")
        gamma = self.params["gamma"].reshape(1, -1, 1, 1)
        beta = self.params["beta"].reshape(1, -1, 1, 1)
        if training:
            if x.shape[0] < 2:
                raise ValueError("batch normalisation needs batch size >= 2 in training mode")
            mu = x.mean(axis=(0, 2, 3), keepdims=True)
            var = x.var(axis=(0, 2, 3), keepdims=True)
            invstd = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mu) * invstd
            m = self.momentum if self._stats_seen else 0.0
            self._stats_seen = True
            self.buffers["running_mean"][...] = (
                m * self.buffers["running_mean"] + (1.0 - m) * mu.reshape(-1))
            self.buffers["running_var"][...] = (
                m * self.buffers["running_var"] + (1.0 - m) * var.reshape(-1))
            self._cache = (xhat, invstd)
            return gamma * xhat + beta
        rm = self.buffers["running_mean"].reshape(1, -1, 1, 1)
        rv = self.buffers["running_var"].reshape(1, -1, 1, 1)
        self._cache = None
        return gamma * (x - rm) / np.sqrt(rv + self.eps) + beta

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        xhat, invstd = self._need_cache()
        gamma = self.params["gamma"].reshape(1, -1, 1, 1)
        self.grads["gamma"] = (grad_out * xhat).sum(axis=(0, 2, 3))
        self.grads["beta"] = grad_out.sum(axis=(0, 2, 3))
        dxhat = grad_out * gamma
        mean_dxhat = dxhat.mean(axis=(0, 2, 3), keepdims=True)
        mean_dxhat_xhat = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
        return invstd * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)


class ReLU(Layer):
    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self._cache = x > 0
        return np.where(self._cache, x, 0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        mask = self._need_cache()
        return np.where(mask, grad_out, 0)


class MaxPool2(Layer):
    """2x2 max pooling with stride 2; ties route the gradient to the first max."""

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        B, C, H, W = x.shape
        H2, W2 = H // 2, W // 2
        if H2 < 1 or W2 < 1:
            raise ValueError(f"input {H}x{W} too small for 2x2 pooling")
        xc = x[:, :, : 2 * H2, : 2 * W2]
        xw = xc.reshape(B, C, H2, 2, W2, 2).transpose(0, 1, 2, 4, 3, 5)
        xw = xw.reshape(B, C, H2, W2, 4)
        idx = xw.argmax(axis=-1)
        out = np.take_along_axis(xw, idx[..., None], axis=-1)[..., 0]
        self._cache = (idx, x.shape)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        idx, (B, C, H, W) = self._need_cache()
        H2, W2 = H // 2, W // 2
        gw = np.zeros((B, C, H2, W2, 4), dtype=grad_out.dtype)
        np.put_along_axis(gw, idx[..., None], grad_out[..., None], axis=-1)
        gx = np.zeros((B, C, H, W), dtype=grad_out.dtype)
        gx[:, :, : 2 * H2, : 2 * W2] = (
            gw.reshape(B, C, H2, W2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
            .reshape(B, C, 2 * H2, 2 * W2))
        return gx


class GlobalAvgPool(Layer):
    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self._cache = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        B, C, H, W = self._need_cache()
        return np.broadcast_to(
            grad_out[:, :, None, None] / (H * W), (B, C, H, W)).astype(grad_out.dtype).copy()


class Dense(Layer):
    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.params["w"] = he_uniform((in_features, out_features), in_features, rng, dtype)
        self.params["b"] = np.zeros(out_features, dtype=dtype)

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.params["w"].shape[0]:
            raise ValueError(
                f"expected (B, {self.params['w'].shape[0]}) input, got {x.shape}")
        self._cache = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x = self._need_cache()
        self.grads["w"] = x.T @ grad_out
        self.grads["b"] = grad_out.sum(axis=0)
        return grad_out @ self.params["w"].T


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, targets: np.ndarray):
    """Mean cross-entropy over the batch plus the gradient wrt logits.

    ``targets`` must be one-hot rows; the computation is log-sum-exp
    stabilised. Returns (loss, grad_logits) with grad = (softmax - y)/B.
    """
    if logits.shape != targets.shape:
        raise ValueError(f"logits {logits.shape} and targets {targets.shape} differ")
    onehot_ok = np.all((targets == 0) | (targets == 1)) and np.all(targets.sum(axis=1) == 1)
    if not onehot_ok:
        raise ValueError("targets must be one-hot rows")
    B = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    loss = float(-(targets * logp).sum() / B)
    grad = (np.exp(logp) - targets) / B
    return loss, grad.astype(logits.dtype)
