"""Fitting the correlation head on fixed stream scores.

Each epoch visits every clip once in a shuffled order. A clip contributes
one training pair: a spatial frame and a temporal frame drawn independently
(no temporal alignment), or, with ``sampling="segment"``, the average of one
random frame per segment in each modality. Mini-batch loss is the mean over
the batch, optimised with classical momentum SGD.
"""

import csv
import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from . import kvconfig
from . import tensorcore as tc
from .dataio import is_hit, segment_sample
from .errors import ConfigError, DataError, DimensionError
from .model import PARAM_FIELDS, backward, forward

LOSS_MODES = ("softmax_ce", "sigmoid_bce")
SAMPLING_MODES = ("frame", "segment")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    epochs: int = 200
    learning_rate: float = 0.001
    momentum: float = 0.9
    seed: int = 0
    K: int = 3
    loss_mode: str = "softmax_ce"
    eps: float = tc.DEFAULT_EPS
    sampling: str = "frame"
    normalize_rows: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        # lr == 0 freezes the head
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.sampling not in SAMPLING_MODES:
            raise ConfigError(f"sampling must be one of {SAMPLING_MODES}, got {self.sampling!r}")
        if self.eps < 0:
            raise ConfigError(f"eps must be >= 0, got {self.eps}")

    def save(self, path):
        kvconfig.write_kv(kvconfig.dataclass_to_kv(self), path)

    @classmethod
    def load(cls, path):
        return kvconfig.dataclass_from_kv(cls, kvconfig.read_kv(path))


@dataclass
class OptimizerState:
    velocity: dict

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(getattr(params, k)) for k in PARAM_FIELDS})


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    accuracies: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    params_path: str = ""

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss", "accuracy", "seconds"])
            for i, (loss, acc, sec) in enumerate(zip(self.losses, self.accuracies, self.seconds), 1):
                writer.writerow([i, repr(loss), repr(acc), f"{sec:.6f}"])


def _target_matrix(targets, B, loss_mode):
    Y = np.zeros((len(targets), B))
    for i, t in enumerate(targets):
        if isinstance(t, (int, np.integer)):
            if not 0 <= t < B:
                raise ConfigError(f"class id {t} outside [0, {B})")
            Y[i, int(t)] = 1.0
        else:
            if loss_mode == "softmax_ce":
                raise ConfigError("softmax_ce needs a single class id, got a multi-hot target")
            t = np.asarray(t)
            if t.shape != (B,) or not np.all((t == 0) | (t == 1)):
                raise ConfigError(f"multi-hot target must be 0/1 of length {B}")
            Y[i] = t
    return Y


def sample_losses(Z, targets, loss_mode="softmax_ce"):
    """Per-row losses of logits ``(N, B)`` and the gradient of their batch mean w.r.t. ``Z``."""
    Z = np.asarray(Z, dtype=np.float64)
    N, B = Z.shape
    Y = _target_matrix(targets, B, loss_mode)
    if loss_mode == "softmax_ce":
        P = tc.softmax(Z)
        picked = np.maximum(np.sum(P * Y, axis=1), tc.PROB_FLOOR)
        return -np.log(picked), (P - Y) / N
    if loss_mode == "sigmoid_bce":
        # softplus(z) - y z, stable for both signs
        per = np.logaddexp(0.0, Z) - Y * Z
        sig = 0.5 * (1.0 + np.tanh(0.5 * Z))
        return per.mean(axis=1), (sig - Y) / (N * B)
    raise ConfigError(f"unknown loss_mode {loss_mode!r}")


def batch_loss(Z, targets, loss_mode="softmax_ce"):
    """Mean loss over a batch of logits ``(N, B)`` and its gradient w.r.t. ``Z``."""
    per, dZ = sample_losses(Z, targets, loss_mode)
    return float(np.mean(per)), dZ


def corrnet_loss(z_logits, target, loss_mode="softmax_ce"):
    """Loss of one logit vector against a class id or multi-hot target.

    ``softmax_ce``: ``-log softmax(z)[y]`` (probability floored at 1e-12),
    gradient ``softmax(z) - onehot(y)``. ``sigmoid_bce``: mean per-class
    binary cross-entropy with gradient ``(sigmoid(z) - y) / B``.
    """
    z = tc.as_vector(z_logits, "z_logits")
    loss, dZ = batch_loss(z[None, :], [target], loss_mode)
    return loss, dZ[0]


def sample_training_pair(clip, rng, sampling="frame", K=3):
    """Draw ``(u, v)`` from a ``(spatial_clip, temporal_clip)`` pair.

    Frames are drawn independently per modality, so the two frames need
    not come from the same moment of the clip.
    """
    s_clip, t_clip = clip
    if s_clip.num_frames < 1 or t_clip.num_frames < 1:
        raise DataError(f"clip {s_clip.clip_id!r} has an empty modality")
    if sampling == "frame":
        return (s_clip.frames[rng.integers(s_clip.num_frames)],
                t_clip.frames[rng.integers(t_clip.num_frames)])
    u = s_clip.frames[segment_sample(s_clip, K=K, rng=rng, mode="train_random")].mean(axis=0)
    v = t_clip.frames[segment_sample(t_clip, K=K, rng=rng, mode="train_random")].mean(axis=0)
    return u, v


def sgd_momentum_step(params, grads, state, lr, momentum):
    """``velocity = momentum * velocity - lr * grad``; ``param += velocity``.

    Returns new ``(params, state)``; the inputs are not modified.
    """
    velocity = {}
    updates = {}
    for name in PARAM_FIELDS:
        g = getattr(grads, name)
        p = getattr(params, name)
        if g.shape != p.shape or state.velocity[name].shape != p.shape:
            raise DimensionError(f"{name}: gradient {g.shape} / velocity "
                                 f"{state.velocity[name].shape} vs param {p.shape}")
        velocity[name] = momentum * state.velocity[name] - lr * g
        updates[name] = p + velocity[name]
    return dataclasses.replace(params, **updates), OptimizerState(velocity)


def check_compatible(dataset, params):
    if len(dataset) == 0:
        raise ConfigError("dataset has no clips")
    B = dataset.class_count
    if params.B != B:
        raise ConfigError(f"head outputs {params.B} classes, dataset has {B}")
    if params.n != dataset.spatial.class_count or params.m != dataset.temporal.class_count:
        raise ConfigError(
            f"head expects {params.n}x{params.m} scores, dataset provides "
            f"{dataset.spatial.class_count}x{dataset.temporal.class_count}"
        )


def train(dataset, params, config, log=None):
    """Run ``config.epochs`` epochs of mini-batch SGD; returns ``(params, report)``.

    Everything random comes from ``default_rng(config.seed)``, so the same
    dataset, initial params and config give bit-identical results.
    """
    check_compatible(dataset, params)
    if config.loss_mode == "softmax_ce" and dataset.multilabel:
        raise ConfigError("multi-label data needs loss_mode=sigmoid_bce")
    rng = np.random.default_rng(config.seed)
    clips = list(dataset.pairs())
    state = OptimizerState.zeros_like(params)
    report = TrainReport()
    for epoch in range(config.epochs):
        start = time.perf_counter()
        order = rng.permutation(len(clips))
        # indexed by clip so the epoch sums do not depend on the shuffle
        clip_loss = np.zeros(len(clips))
        clip_hit = np.zeros(len(clips), dtype=bool)
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo:lo + config.batch_size]
            batch = [clips[i] for i in idx]
            pairs = [sample_training_pair(c, rng, config.sampling, config.K) for c in batch]
            U = np.array([p[0] for p in pairs])
            V = np.array([p[1] for p in pairs])
            targets = [c[0].label for c in batch]
            Z, cache = forward(params, U, V, config.eps, config.normalize_rows)
            per, dZ = sample_losses(Z, targets, config.loss_mode)
            clip_loss[idx] = per
            clip_hit[idx] = [is_hit(k, y) for k, y in zip(np.argmax(Z, axis=1), targets)]
            grads = backward(params, cache, dZ)
            params, state = sgd_momentum_step(params, grads, state,
                                              config.learning_rate, config.momentum)
        report.losses.append(float(clip_loss.mean()))
        report.accuracies.append(float(clip_hit.mean()))
        report.seconds.append(time.perf_counter() - start)
        if log is not None:
            log(epoch + 1, report.losses[-1], report.accuracies[-1])
    return params, report
