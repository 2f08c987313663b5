"""Joint SSL + SL objective, exact backpropagation, AdamW and the training loop."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import IO, Callable, Sequence

import numpy as np

from . import model
from .model import ModelConfig, ForwardTrace, forward, init_params, trainable_names
from .signal_prep import avg_pool_target

logger = logging.getLogger(__name__)

SSL_LAMBDA = 0.5


class TrainingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# losses


def loss_pool(target: np.ndarray, recon: np.ndarray) -> float:
    """Mean squared error between true and reconstructed pooled signals."""
    target = np.asarray(target, dtype=np.float64)
    recon = np.asarray(recon, dtype=np.float64)
    if target.shape != recon.shape:
        raise TrainingError(f"shape mismatch: target {target.shape} vs reconstruction {recon.shape}")
    diff = target - recon
    return float(np.mean(diff * diff))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    return logits - m - np.log(np.exp(logits - m).sum(axis=-1, keepdims=True))


def loss_ce(logits: np.ndarray, label: int) -> float:
    """Cross-entropy of one logit vector against an integer class label."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise TrainingError("logits contain non-finite values")
    if not 0 <= label < logits.shape[-1]:
        raise TrainingError(f"label {label} outside 0..{logits.shape[-1] - 1}")
    return float(-log_softmax(logits)[label])


@dataclass(frozen=True)
class LossBreakdown:
    ce: float
    pool: float
    lam: float
    total: float


def loss_total(ce: float, pool: float, lam: float = SSL_LAMBDA) -> LossBreakdown:
    if ce < 0 or pool < 0:
        raise TrainingError(f"losses must be non-negative, got ce={ce}, pool={pool}")
    return LossBreakdown(ce=ce, pool=pool, lam=lam, total=ce + lam * pool)


def batch_losses(
    logits: np.ndarray, recon: np.ndarray, targets: np.ndarray, labels: np.ndarray, lam: float
) -> LossBreakdown:
    """Batch-mean losses. With ``lam == 0`` the pool term is reported as 0."""
    ce = float(np.mean(-log_softmax(logits)[np.arange(len(labels)), labels]))
    pool = loss_pool(targets, recon) if lam != 0 else 0.0
    return loss_total(ce, pool, lam)


# ---------------------------------------------------------------------------
# backward


def backward(
    trace: ForwardTrace,
    params: dict[str, np.ndarray],
    config: ModelConfig,
    targets: np.ndarray,
    labels: np.ndarray,
    lam: float = SSL_LAMBDA,
) -> dict[str, np.ndarray]:
    """Gradients of the batch-mean joint loss for every trainable parameter.

    ``trace`` must come from ``forward(..., mode="train")`` on the same batch.
    SSL head gradients are exact zeros when ``lam == 0``.
    """
    labels = np.asarray(labels)
    B = trace.x.shape[0]
    if labels.shape != (B,) or targets.shape != trace.recon.shape:
        raise TrainingError(
            f"trace/batch mismatch: trace batch {B}, labels {labels.shape}, "
            f"targets {targets.shape} vs reconstruction {trace.recon.shape}"
        )
    elu_grad = model.elu_grad
    grads: dict[str, np.ndarray] = {}

    # SL head
    d_logits = trace.probs.copy()
    d_logits[np.arange(B), labels] -= 1.0
    d_logits /= B
    grads["sl.weight"] = np.einsum("bk,bft->kft", d_logits, trace.latent)
    grads["sl.bias"] = d_logits.sum(axis=0)
    d_latent = np.einsum("bk,kft->bft", d_logits, params["sl.weight"])

    # SSL head
    if lam != 0:
        C, Tp = trace.recon.shape[1:]
        d_recon = (lam * 2.0 / (C * Tp * B)) * (trace.recon - targets)
        d_out = d_recon.reshape(B, -1)
        grads["ssl.w2"] = d_out.T @ trace.ssl_hidden
        grads["ssl.b2"] = d_out.sum(axis=0)
        d_pre = (d_out @ params["ssl.w2"]) * elu_grad(trace.ssl_pre)
        flat = trace.latent.reshape(B, -1)
        grads["ssl.w1"] = d_pre.T @ flat
        grads["ssl.b1"] = d_pre.sum(axis=0)
        d_latent = d_latent + (d_pre @ params["ssl.w1"]).reshape(trace.latent.shape)
    else:
        for name in model.SSL_PARAMS:
            grads[name] = np.zeros_like(params[name])

    # merge conv + ELU
    d_merge = d_latent * elu_grad(trace.merge_pre)
    grads["merge.bias"] = d_merge.sum(axis=(0, 2))
    w = params["merge.weight"]
    if w.shape[1] == 1:
        grads["merge.weight"] = np.stack(
            [(d_merge * trace.avg).sum(axis=(0, 2)), (d_merge * trace.var).sum(axis=(0, 2))],
            axis=-1,
        )[:, None, :]
        d_avg = d_merge * w[None, :, 0, 0, None]
        d_var = d_merge * w[None, :, 0, 1, None]
    else:
        grads["merge.weight"] = np.stack(
            [
                np.einsum("bot,bit->oi", d_merge, trace.avg),
                np.einsum("bot,bit->oi", d_merge, trace.var),
            ],
            axis=-1,
        )
        d_avg = np.einsum("oi,bot->bit", w[..., 0], d_merge)
        d_var = np.einsum("oi,bot->bit", w[..., 1], d_merge)

    # dual pooling
    P = config.pool_window
    act_w = trace.act.reshape(*trace.act.shape[:-1], -1, P)
    centred = act_w - act_w.mean(axis=-1, keepdims=True)
    d_act = d_avg[..., None] / P + d_var[..., None] * (2.0 / P) * centred
    d_act = d_act.reshape(trace.act.shape)

    # ELU + batch norm (batch-statistics path)
    d_bn = d_act * elu_grad(trace.bn_out)
    x_hat = trace.bn.x_hat
    grads["bn.beta"] = d_bn.sum(axis=(0, 2))
    grads["bn.gamma"] = (d_bn * x_hat).sum(axis=(0, 2))
    d_xhat = d_bn * trace.bn.gamma[None, :, None]
    n = d_bn.shape[0] * d_bn.shape[2]
    d_feat = (trace.bn.inv_std[None, :, None] / n) * (
        n * d_xhat
        - d_xhat.sum(axis=(0, 2), keepdims=True)
        - x_hat * (d_xhat * x_hat).sum(axis=(0, 2), keepdims=True)
    )

    # branches
    n_branches = len(config.kernel_lengths)
    branch_grads = model.multi_branch_conv_backward(
        trace.x, [params[f"branch{i}.weight"] for i in range(n_branches)], d_feat
    )
    for i, (gw, gb) in enumerate(branch_grads):
        grads[f"branch{i}.weight"] = gw
        grads[f"branch{i}.bias"] = gb

    return {name: grads[name] for name in trainable_names(config)}


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamWState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    no_decay: tuple[str, ...] = ("bn.gamma", "bn.beta")
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamWState
) -> tuple[dict[str, np.ndarray], AdamWState]:
    """One AdamW update, in place on ``params`` and ``state``.

    Weight decay shrinks the parameter directly (``theta -= lr * wd * theta``)
    and is kept out of the moment estimates.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise TrainingError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.weight_decay and name not in state.no_decay:
            p -= state.lr * state.weight_decay * p
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


# ---------------------------------------------------------------------------
# training loop


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lam: float = SSL_LAMBDA
    seed: int = 0
    shuffle: bool = True
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.epochs < 1:
            raise TrainingError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise TrainingError(f"batch_size must be >= 2, got {self.batch_size}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    ce: float
    pool: float
    total: float
    train_accuracy: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator; all randomness in the package goes through here."""
    return np.random.Generator(np.random.Philox(seed))


def stack_windows(windows: Sequence, pool_window: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inputs, pooled SSL targets and labels from a list of labelled windows."""
    x = np.stack([w.segment.data for w in windows])
    return x, avg_pool_target(x, pool_window), np.array([w.label for w in windows])


def _batches(n: int, batch_size: int, order: np.ndarray) -> list[np.ndarray]:
    out = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(out[-1]) < 2:
        out.pop()
    return out


def train_arrays(
    x: np.ndarray,
    targets: np.ndarray,
    labels: np.ndarray,
    model_config: ModelConfig,
    train_config: TrainConfig,
    params: dict[str, np.ndarray] | None = None,
    history_stream: IO[str] | None = None,
    stop_at_accuracy: float | None = None,
) -> tuple[dict[str, np.ndarray], list[EpochRecord]]:
    """Train on pre-stacked arrays. See :func:`train`."""
    n = len(x)
    if n < 2:
        raise TrainingError(f"need at least 2 training windows, got {n}")
    rng = make_rng(train_config.seed)
    if params is None:
        params = init_params(model_config, rng)
    state = AdamWState(
        lr=train_config.lr,
        beta1=train_config.beta1,
        beta2=train_config.beta2,
        eps=train_config.eps,
        weight_decay=train_config.weight_decay,
    )
    lam = train_config.lam
    history: list[EpochRecord] = []
    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(n) if train_config.shuffle else np.arange(n)
        sums = np.zeros(3)
        correct = seen = 0
        for idx in _batches(n, train_config.batch_size, order):
            logits, recon, trace = forward(x[idx], params, model_config, mode="train")
            losses = batch_losses(logits, recon, targets[idx], labels[idx], lam)
            grads = backward(trace, params, model_config, targets[idx], labels[idx], lam)
            adamw_step(params, grads, state)
            sums += len(idx) * np.array([losses.ce, losses.pool, losses.total])
            correct += int((np.argmax(logits, axis=1) == labels[idx]).sum())
            seen += len(idx)
        ce, pool, total = sums / seen
        rec = EpochRecord(epoch, float(ce), float(pool), float(total), 100.0 * correct / seen)
        history.append(rec)
        logger.debug("epoch %d: %s", epoch, rec)
        if history_stream is not None:
            history_stream.write(rec.to_json() + "\n")
        if stop_at_accuracy is not None and rec.train_accuracy >= stop_at_accuracy:
            break
    return params, history


def train(
    windows: Sequence,
    model_config: ModelConfig,
    train_config: TrainConfig,
    history_stream: IO[str] | None = None,
) -> tuple[dict[str, np.ndarray], list[EpochRecord]]:
    """Train a fresh model on labelled windows.

    Each epoch draws a seeded shuffle, cuts it into ``batch_size`` batches
    (a ragged final batch is kept if it has at least two windows), and runs
    forward, backward and one AdamW step per batch. The parameters after
    the final epoch are returned together with one :class:`EpochRecord`
    per epoch.
    """
    if len(windows) < 2:
        raise TrainingError(f"need at least 2 training windows, got {len(windows)}")
    x, targets, labels = stack_windows(windows, model_config.pool_window)
    return train_arrays(x, targets, labels, model_config, train_config, history_stream=history_stream)


# ---------------------------------------------------------------------------
# gradient check


@dataclass
class GradCheckResult:
    max_rel_error: float
    per_param: dict[str, float]
    threshold: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.threshold


_NORM_FLOOR = 1e-6


def _rel_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), _NORM_FLOOR)
    return float(np.linalg.norm(a - b) / denom)


def grad_check(
    config: ModelConfig | None = None,
    seed: int = 0,
    lam: float = SSL_LAMBDA,
    batch_size: int = 4,
    step: float = 1e-5,
    backward_fn: Callable = backward,
) -> GradCheckResult:
    """Compare analytic gradients with central differences on a random batch.

    The error for each tensor is ``|a - n| / max(|a| + |n|, 1e-6)`` in the
    2-norm; the result holds the worst over all checked tensors. SSL head
    tensors are skipped when ``lam == 0``.
    """
    config = config or ModelConfig.tiny()
    rng = make_rng(seed)
    params = init_params(config, rng)
    for name, p in params.items():
        if name not in model.BUFFERS:
            p += 0.1 * rng.standard_normal(p.shape)
    x = rng.standard_normal((batch_size, *config.input_shape))
    targets = avg_pool_target(x, config.pool_window)
    labels = rng.integers(0, config.num_classes, size=batch_size)

    def total_loss(p):
        logits, recon, _ = forward(x, {k: v.copy() for k, v in p.items()}, config, mode="train")
        return batch_losses(logits, recon, targets, labels, lam).total

    _, _, trace = forward(x, {k: v.copy() for k, v in params.items()}, config, mode="train")
    analytic = backward_fn(trace, params, config, targets, labels, lam)

    names = [n for n in trainable_names(config) if lam != 0 or n not in model.SSL_PARAMS]
    per_param = {}
    for name in names:
        p = params[name]
        numeric = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            orig = p[i]
            p[i] = orig + step
            up = total_loss(params)
            p[i] = orig - step
            down = total_loss(params)
            p[i] = orig
            numeric[i] = (up - down) / (2 * step)
        per_param[name] = _rel_error(analytic[name], numeric)
    return GradCheckResult(max(per_param.values()), per_param)
