"""Late fusion of spatial/temporal class scores with an optional correlation head.

Baselines combine ``u`` and ``v`` elementwise. The correlation strategies
add the head's logits ``Z`` before a softmax, and the Shannon gate drops
``Z`` whenever the entropy of the fused distribution reaches a threshold.
"""

from dataclasses import dataclass

import numpy as np

from . import kvconfig
from . import tensorcore as tc
from .dataio import clip_scores, is_hit
from .errors import ConfigError, DataError, DimensionError
from .model import predict_logits
from .training import train

BASELINES = ("sum", "avg", "max", "multiply")
STRATEGIES = BASELINES + ("corrnet", "corrnet_shannon")
DEFAULT_GRID_STEPS = 21


@dataclass(frozen=True)
class FusionConfig:
    strategy: str = "corrnet_shannon"
    stream_weight: float = 1.0
    corrnet_weight: float = 1.0
    th: float = 1.0
    eps: float = tc.DEFAULT_EPS
    # use corrnet_weight * Z inside the gate entropy as well
    weighted_gate: bool = False
    normalize_rows: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        for name in ("stream_weight", "corrnet_weight", "th", "eps"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.th < 0:
            raise ConfigError(f"th must be >= 0, got {self.th}")
        if self.eps < 0:
            raise ConfigError(f"eps must be >= 0, got {self.eps}")

    @property
    def uses_corrnet(self):
        return self.strategy in ("corrnet", "corrnet_shannon")

    def save(self, path):
        kvconfig.write_kv(kvconfig.dataclass_to_kv(self), path)

    @classmethod
    def load(cls, path):
        return kvconfig.dataclass_from_kv(cls, kvconfig.read_kv(path))


@dataclass(frozen=True)
class FusionDecision:
    fused_probs: np.ndarray
    corrnet_included: bool
    gate_entropy: float
    # pre-softmax fused scores, used for ranking metrics
    scores: np.ndarray = None


def _same_dims(*vectors):
    arrs = [tc.as_vector(x) for x in vectors]
    if len({a.shape for a in arrs}) != 1:
        raise DimensionError(f"dimension mismatch: {[a.shape[0] for a in arrs]}")
    return arrs


def fuse_baseline(u, v, strategy):
    u, v = _same_dims(u, v)
    if strategy == "sum":
        return u + v
    if strategy == "avg":
        return (u + v) / 2.0
    if strategy == "max":
        return np.maximum(u, v)
    if strategy == "multiply":
        return u * v
    raise ConfigError(f"not a baseline strategy: {strategy!r}")


def fuse_corrnet(z_logits, u, v, stream_weight=1.0, corrnet_weight=1.0):
    """``softmax(corrnet_weight * Z + stream_weight * (u + v))``."""
    z, u, v = _same_dims(z_logits, u, v)
    return tc.softmax(corrnet_weight * z + stream_weight * (u + v))


def gate_entropy(z_logits, u, v, normalize=True):
    """Entropy (bits) of ``softmax(Z + u + v)`` after shifting each term to min 0.

    The shift cannot change a softmax; ``normalize=False`` skips it and is
    kept so the equivalence stays checkable.
    """
    z, u, v = _same_dims(z_logits, u, v)
    g = u + v
    x = z + g
    if normalize:
        x = x - z.min() - g.min()
    return tc.shannon_entropy(tc.softmax(x))


def _check_th(th, B):
    if not 0.0 <= th <= np.log2(B) + 1e-12:
        raise ConfigError(f"th={th} outside [0, log2 B] = [0, {np.log2(B):.6g}]")


def shannon_gate(z_logits, u, v, th, stream_weight=1.0, corrnet_weight=1.0, weighted_gate=False):
    """Fuse with the head only when the gate entropy is below ``th``."""
    z, u, v = _same_dims(z_logits, u, v)
    _check_th(th, z.shape[0])
    e = gate_entropy(corrnet_weight * z if weighted_gate else z, u, v)
    if e >= th:
        scores = stream_weight * (u + v)
        return FusionDecision(tc.softmax(scores), False, e, scores)
    scores = corrnet_weight * z + stream_weight * (u + v)
    return FusionDecision(tc.softmax(scores), True, e, scores)


def apply_fusion(config, z_logits, u, v):
    """Dispatch on ``config.strategy`` and return a ``FusionDecision``.

    Baselines never include the head; their ``fused_probs`` is the softmax
    of the fused scores and ``gate_entropy`` is NaN.
    """
    if config.strategy in BASELINES:
        scores = fuse_baseline(u, v, config.strategy)
        return FusionDecision(tc.softmax(scores), False, float("nan"), scores)
    if z_logits is None:
        raise ConfigError(f"strategy {config.strategy!r} needs correlation-head logits")
    if config.strategy == "corrnet":
        z, u, v = _same_dims(z_logits, u, v)
        scores = config.corrnet_weight * z + config.stream_weight * (u + v)
        return FusionDecision(tc.softmax(scores), True, float("nan"), scores)
    return shannon_gate(z_logits, u, v, config.th, config.stream_weight,
                        config.corrnet_weight, config.weighted_gate)


def threshold_grid(B, steps=DEFAULT_GRID_STEPS):
    if steps < 2:
        raise ConfigError(f"grid_steps must be >= 2, got {steps}")
    return np.linspace(0.0, np.log2(B), steps)


def gate_outcomes(Z, U, V, labels, stream_weight=1.0, corrnet_weight=1.0, weighted_gate=False):
    """Per clip: gate entropy and top-1 correctness with and without the head."""
    entropies, hit_in, hit_out = [], [], []
    for z, u, v, y in zip(Z, U, V, labels):
        entropies.append(gate_entropy(corrnet_weight * z if weighted_gate else z, u, v))
        hit_in.append(is_hit(np.argmax(corrnet_weight * z + stream_weight * (u + v)), y))
        hit_out.append(is_hit(np.argmax(stream_weight * (u + v)), y))
    return np.array(entropies), np.array(hit_in), np.array(hit_out)


def best_threshold(entropies, hit_in, hit_out, grid):
    """Grid point with the highest gated accuracy; ties go to the smaller threshold.

    Returns ``(th, accuracies)`` with one accuracy per grid point.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if len(entropies) == 0:
        raise DataError("no clips to score thresholds on")
    include = entropies[None, :] < grid[:, None]
    acc = np.where(include, hit_in[None, :], hit_out[None, :]).mean(axis=1)
    order = np.lexsort((grid, -acc))
    return float(grid[order[0]]), acc


def search_threshold(params, train_subset, val_subset, grid_steps=DEFAULT_GRID_STEPS,
                     fusion_config=None, train_config=None):
    """Pick the Shannon threshold by accuracy on a held-out split.

    ``train_subset`` and ``val_subset`` must be disjoint. With a
    ``train_config`` the head is first trained on ``train_subset`` starting
    from ``params``; otherwise ``params`` is used as given. Every point of
    ``threshold_grid(B, grid_steps)`` is scored on ``val_subset``.
    """
    if len(train_subset) == 0 or len(val_subset) == 0:
        raise ConfigError("threshold search needs non-empty sub-train and sub-val splits")
    overlap = set(train_subset.clip_ids) & set(val_subset.clip_ids)
    if overlap:
        raise ConfigError(f"sub-train and sub-val share {len(overlap)} clip ids")
    cfg = fusion_config or FusionConfig()
    if train_config is not None:
        params, _ = train(train_subset, params, train_config)
    U, V = clip_scores(val_subset)
    Z = predict_logits(params, U, V, cfg.eps, cfg.normalize_rows)
    ent, hit_in, hit_out = gate_outcomes(Z, U, V, val_subset.labels, cfg.stream_weight,
                                         cfg.corrnet_weight, cfg.weighted_gate)
    th, _ = best_threshold(ent, hit_in, hit_out, threshold_grid(params.B, grid_steps))
    return th
