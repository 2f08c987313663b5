"""MuseCogNet forward computation in plain numpy.

Every layer is a free function over ``(batch, channels, time)`` arrays so the
backward pass in :mod:`musecognet.training` can reuse the cached values.
Parameters live in an ordered ``dict[str, np.ndarray]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft


class ShapeError(ValueError):
    """Raised when arrays do not match the model configuration."""


@dataclass(frozen=True)
class ModelConfig:
    kernel_lengths: tuple[int, ...] = (16, 32, 64, 128)
    filters_per_branch: int = 8
    pool_window: int = 32
    latent_channels: int = 32
    ssl_hidden: int = 256
    num_classes: int = 3
    input_shape: tuple[int, int] = (4, 512)
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.1
    merge_mode: str = "mixing"

    def __post_init__(self):
        ks = tuple(int(k) for k in self.kernel_lengths)
        object.__setattr__(self, "kernel_lengths", ks)
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        if any(b <= a for a, b in zip(ks, ks[1:])) or ks[0] < 1:
            raise ShapeError(f"kernel_lengths must be positive and strictly increasing: {ks}")
        c, t = self.input_shape
        if ks[-1] > t:
            raise ShapeError(f"kernel length {ks[-1]} exceeds input length {t}")
        if t % self.pool_window:
            raise ShapeError(f"input length {t} not divisible by pool window {self.pool_window}")
        if self.latent_channels != len(ks) * self.filters_per_branch:
            raise ShapeError(
                "latent_channels must equal len(kernel_lengths) * filters_per_branch "
                f"({len(ks)} * {self.filters_per_branch}), got {self.latent_channels}"
            )
        if self.merge_mode not in ("mixing", "depthwise"):
            raise ShapeError(f"merge_mode must be 'mixing' or 'depthwise', got {self.merge_mode!r}")

    @property
    def n_channels(self) -> int:
        return self.input_shape[0]

    @property
    def n_times(self) -> int:
        return self.input_shape[1]

    @property
    def pooled_len(self) -> int:
        return self.n_times // self.pool_window

    @classmethod
    def tiny(cls, **overrides) -> "ModelConfig":
        """Small configuration for finite-difference gradient checks."""
        base = dict(
            kernel_lengths=(2, 4, 8, 16),
            filters_per_branch=2,
            pool_window=8,
            latent_channels=8,
            ssl_hidden=16,
            input_shape=(2, 32),
        )
        base.update(overrides)
        return cls(**base)


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Names and shapes of every tensor in a parameter set, in checkpoint order."""
    C, _ = config.input_shape
    F, Tp, H, K = config.latent_channels, config.pooled_len, config.ssl_hidden, config.num_classes
    shapes: dict[str, tuple[int, ...]] = {}
    for i, k in enumerate(config.kernel_lengths):
        shapes[f"branch{i}.weight"] = (config.filters_per_branch, C, k)
        shapes[f"branch{i}.bias"] = (config.filters_per_branch,)
    shapes["bn.gamma"] = (F,)
    shapes["bn.beta"] = (F,)
    shapes["bn.running_mean"] = (F,)
    shapes["bn.running_var"] = (F,)
    shapes["merge.weight"] = (F, F if config.merge_mode == "mixing" else 1, 2)
    shapes["merge.bias"] = (F,)
    shapes["ssl.w1"] = (H, F * Tp)
    shapes["ssl.b1"] = (H,)
    shapes["ssl.w2"] = (C * Tp, H)
    shapes["ssl.b2"] = (C * Tp,)
    shapes["sl.weight"] = (K, F, Tp)
    shapes["sl.bias"] = (K,)
    return shapes


BUFFERS = ("bn.running_mean", "bn.running_var")
SSL_PARAMS = ("ssl.w1", "ssl.b1", "ssl.w2", "ssl.b2")


def trainable_names(config: ModelConfig) -> list[str]:
    return [n for n in param_shapes(config) if n not in BUFFERS]


def init_params(config: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Fan-in scaled uniform weights, zero biases, identity batch norm."""
    params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".weight") or name in ("ssl.w1", "ssl.w2"):
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(1.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
        elif name in ("bn.gamma", "bn.running_var"):
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    return params


def check_params(params: dict[str, np.ndarray], config: ModelConfig) -> None:
    for name, shape in param_shapes(config).items():
        if name not in params:
            raise ShapeError(f"missing parameter {name!r}")
        if params[name].shape != shape:
            raise ShapeError(f"{name}: expected shape {shape}, got {params[name].shape}")


# ---------------------------------------------------------------------------
# layers


def _pads(k: int) -> tuple[int, int]:
    left = (k - 1) // 2
    return left, k - 1 - left


def _embed_kernels(weights: list[np.ndarray]) -> tuple[np.ndarray, list[int], int]:
    """Place every branch kernel inside one kernel of the longest length.

    With same-padding, a length-``k`` kernel lines up with a length-``K``
    kernel shifted by ``left(K) - left(k)`` taps, so all branches share one
    correlation. Returns the stacked ``(sum F, C, K)`` kernel, per-branch tap
    offsets and ``K``.
    """
    K = max(w.shape[-1] for w in weights)
    left_max, _ = _pads(K)
    F = sum(w.shape[0] for w in weights)
    C = weights[0].shape[1]
    stacked = np.zeros((F, C, K))
    offsets = []
    row = 0
    for w in weights:
        off = left_max - _pads(w.shape[-1])[0]
        stacked[row : row + w.shape[0], :, off : off + w.shape[-1]] = w
        offsets.append(off)
        row += w.shape[0]
    return stacked, offsets, K


def multi_branch_conv(
    x: np.ndarray, weights: list[np.ndarray], biases: list[np.ndarray]
) -> np.ndarray:
    """Run several same-padded branch convolutions and concatenate the outputs.

    ``out[b, f, t] = bias[f] + sum_{c, j} w[f, c, j] * xpad[b, c, t + j]``
    where ``xpad`` is ``x`` zero-padded by ``(k-1)//2`` on the left and the
    remainder on the right, so every branch keeps length ``T``. Computed as
    one real-FFT correlation.

    Args:
        x: ``(B, C, T)`` input.
        weights: per-branch ``(F_i, C, k_i)`` kernels.
        biases: per-branch ``(F_i,)``.

    Returns:
        ``(B, sum F_i, T)`` feature map.
    """
    B, C, T = x.shape
    for w in weights:
        if w.shape[1] != C:
            raise ShapeError(f"weight expects {w.shape[1]} input channels, input has {C}")
        if w.shape[-1] > T:
            raise ShapeError(f"kernel length {w.shape[-1]} exceeds input length {T}")
    kernel, _, K = _embed_kernels(weights)
    left, _ = _pads(K)
    n = sfft.next_fast_len(T + K - 1, real=True)
    X = sfft.rfft(x, n=n, axis=-1).transpose(2, 0, 1)  # (n, B, C)
    W = sfft.rfft(kernel[..., ::-1], n=n, axis=-1).transpose(2, 1, 0)  # (n, C, F)
    full = sfft.irfft((X @ W).transpose(1, 2, 0), n=n, axis=-1)
    start = K - 1 - left
    bias = np.concatenate(biases)
    return full[..., start : start + T] + bias[None, :, None]


def multi_branch_conv_backward(
    x: np.ndarray, weights: list[np.ndarray], grad_out: np.ndarray
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-branch ``(weight, bias)`` gradients of :func:`multi_branch_conv`."""
    B, C, T = x.shape
    _, offsets, K = _embed_kernels(weights)
    left, right = _pads(K)
    xpad = np.pad(x, ((0, 0), (0, 0), (left, right)))
    # dW[f, c, j] = sum_{b, t} g[b, f, t] * xpad[b, c, t + j]
    L = T + K - 1
    n = sfft.next_fast_len(L + T - 1, real=True)
    Xp = sfft.rfft(xpad, n=n, axis=-1).transpose(2, 0, 1)  # (n, B, C)
    G = sfft.rfft(grad_out[..., ::-1], n=n, axis=-1).transpose(2, 1, 0)  # (n, F, B)
    full = sfft.irfft((G @ Xp).transpose(1, 2, 0), n=n, axis=-1)
    grad_kernel = full[..., T - 1 : T - 1 + K]
    grad_bias = grad_out.sum(axis=(0, 2))
    out = []
    row = 0
    for w, off in zip(weights, offsets):
        f, k = w.shape[0], w.shape[-1]
        out.append((grad_kernel[row : row + f, :, off : off + k], grad_bias[row : row + f]))
        row += f
    return out


def branch_conv(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """One branch: ``(B, C, T)`` with ``(F, C, k)`` kernels -> ``(B, F, T)``."""
    return multi_branch_conv(x, [weight], [bias])


def branch_conv_backward(
    x: np.ndarray, weight: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    return multi_branch_conv_backward(x, [weight], grad_out)[0]


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x: np.ndarray) -> np.ndarray:
    """d/dx ELU(x) with alpha = 1."""
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


@dataclass
class BatchNormCache:
    x_hat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray


def batch_norm(
    x: np.ndarray,
    params: dict[str, np.ndarray],
    mode: str = "infer",
    eps: float = 1e-5,
    momentum: float = 0.1,
) -> tuple[np.ndarray, BatchNormCache | None]:
    """Per-channel batch norm over (batch, time).

    In ``"train"`` mode the batch statistics normalize the input and the
    running statistics in ``params`` are updated in place. ``"infer"``
    uses the running statistics and touches nothing.
    """
    gamma, beta = params["bn.gamma"], params["bn.beta"]
    if mode == "train":
        if x.shape[0] < 2:
            raise ShapeError("train-mode batch norm needs a batch of at least 2")
        mean = x.mean(axis=(0, 2))
        var = x.var(axis=(0, 2))
        params["bn.running_mean"] *= 1.0 - momentum
        params["bn.running_mean"] += momentum * mean
        params["bn.running_var"] *= 1.0 - momentum
        params["bn.running_var"] += momentum * var
    elif mode == "infer":
        mean, var = params["bn.running_mean"], params["bn.running_var"]
    else:
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean[None, :, None]) * inv_std[None, :, None]
    out = gamma[None, :, None] * x_hat + beta[None, :, None]
    cache = BatchNormCache(x_hat, inv_std, gamma.copy()) if mode == "train" else None
    return out, cache


def _windows(x: np.ndarray, P: int) -> np.ndarray:
    n = x.shape[-1]
    if P <= 0 or n % P:
        raise ShapeError(f"length {n} is not divisible by pool window {P}")
    return x.reshape(*x.shape[:-1], n // P, P)


def average_pool(x: np.ndarray, P: int) -> np.ndarray:
    return _windows(x, P).mean(axis=-1)


def variance_pool(x: np.ndarray, P: int) -> np.ndarray:
    """Population variance inside each non-overlapping window of length ``P``."""
    w = _windows(x, P)
    centred = w - w.mean(axis=-1, keepdims=True)
    return (centred * centred).mean(axis=-1)


def merge_conv(avg: np.ndarray, var: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """The (2x1) convolution over the stacked (avg, var) pool axis, before ELU.

    ``weight`` is ``(F, F, 2)`` for channel mixing or ``(F, 1, 2)`` for
    depthwise; the last axis indexes the pool type (0 = average, 1 = variance).
    """
    if avg.shape != var.shape:
        raise ShapeError(f"pool shapes differ: {avg.shape} vs {var.shape}")
    if weight.shape[1] == 1:
        z = weight[None, :, 0, 0, None] * avg + weight[None, :, 0, 1, None] * var
    else:
        z = np.einsum("oi,bit->bot", weight[..., 0], avg) + np.einsum(
            "oi,bit->bot", weight[..., 1], var
        )
    return z + bias[None, :, None]


def merge_pools(avg: np.ndarray, var: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Merge the two pooled streams into the latent map."""
    return elu(merge_conv(avg, var, weight, bias))


def ssl_decode(latent: np.ndarray, params: dict[str, np.ndarray], n_channels: int) -> np.ndarray:
    """Two-layer reconstruction head. ``(B, F, T') -> (B, C, T')``.

    The latent is flattened channel-major: flat index ``f * T' + t``.
    """
    B = latent.shape[0]
    h = elu(latent.reshape(B, -1) @ params["ssl.w1"].T + params["ssl.b1"])
    out = h @ params["ssl.w2"].T + params["ssl.b2"]
    return out.reshape(B, n_channels, -1)


def sl_decode(latent: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid 1-D convolution with kernel length T' (one position): ``(B, F, T') -> (B, K)``."""
    if latent.shape[1:] != weight.shape[1:]:
        raise ShapeError(f"latent {latent.shape[1:]} does not match kernel {weight.shape[1:]}")
    return np.einsum("bft,kft->bk", latent, weight) + bias


# ---------------------------------------------------------------------------
# full network


@dataclass
class ForwardTrace:
    x: np.ndarray
    features: np.ndarray
    bn: BatchNormCache
    bn_out: np.ndarray
    act: np.ndarray
    avg: np.ndarray
    var: np.ndarray
    merge_pre: np.ndarray
    latent: np.ndarray
    ssl_pre: np.ndarray
    ssl_hidden: np.ndarray
    recon: np.ndarray
    logits: np.ndarray
    probs: np.ndarray = field(repr=False)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(
    x: np.ndarray,
    params: dict[str, np.ndarray],
    config: ModelConfig,
    mode: str = "infer",
) -> tuple[np.ndarray, np.ndarray, ForwardTrace | None]:
    """Run the network on a batch.

    Args:
        x: ``(B, C, T)`` normalized segments.
        params: parameter dict; in train mode the batch-norm running
            statistics are updated in place.
        config: architecture.
        mode: ``"train"`` (batch statistics, trace kept) or ``"infer"``.

    Returns:
        ``(logits (B, K), reconstruction (B, C, T'), trace or None)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1:] != config.input_shape:
        raise ShapeError(f"expected input (B, {config.input_shape[0]}, {config.input_shape[1]}), got {x.shape}")
    if x.shape[0] == 0:
        raise ShapeError("empty batch")
    P = config.pool_window
    n_branches = len(config.kernel_lengths)
    features = multi_branch_conv(
        x,
        [params[f"branch{i}.weight"] for i in range(n_branches)],
        [params[f"branch{i}.bias"] for i in range(n_branches)],
    )
    bn_out, bn_cache = batch_norm(features, params, mode, config.bn_epsilon, config.bn_momentum)
    act = elu(bn_out)
    avg = average_pool(act, P)
    var = variance_pool(act, P)
    merge_pre = merge_conv(avg, var, params["merge.weight"], params["merge.bias"])
    latent = elu(merge_pre)

    B = x.shape[0]
    ssl_pre = latent.reshape(B, -1) @ params["ssl.w1"].T + params["ssl.b1"]
    ssl_hidden = elu(ssl_pre)
    recon = (ssl_hidden @ params["ssl.w2"].T + params["ssl.b2"]).reshape(B, config.n_channels, -1)
    logits = sl_decode(latent, params["sl.weight"], params["sl.bias"])

    trace = None
    if mode == "train":
        trace = ForwardTrace(
            x=x,
            features=features,
            bn=bn_cache,
            bn_out=bn_out,
            act=act,
            avg=avg,
            var=var,
            merge_pre=merge_pre,
            latent=latent,
            ssl_pre=ssl_pre,
            ssl_hidden=ssl_hidden,
            recon=recon,
            logits=logits,
            probs=softmax(logits),
        )
    return logits, recon, trace


def branch_frequencies(config: ModelConfig, fs: float = 256.0) -> list[float]:
    """Frequency whose full cycle exactly spans each branch kernel."""
    return [fs / k for k in config.kernel_lengths]
