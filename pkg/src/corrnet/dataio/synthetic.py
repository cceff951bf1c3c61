"""Desk-scale synthetic score streams with known answers.

Three generation modes share one class-template scheme (a margin of
``margin`` on the true class, Gaussian per-frame noise):

``independent``
    Each modality carries the template plus its own noise.
``correlated``
    Both modalities additionally share a per-clip confusion: one random
    other class gets the same extra score in both streams.
``correlation_only``
    Classes come in pairs ``(2k, 2k+1)``. Spatial scores are
    ``margin * (s e_2k + e_2k+1)`` and temporal scores
    ``margin * (e_2k + s' e_2k+1)`` with a random sign ``s`` and
    ``s' = s`` for the even class, ``s' = -s`` for the odd class. Each
    stream alone has the same distribution for both classes of a pair;
    only the sign of the off-diagonal outer-product cell ``(2k, 2k+1)``
    tells them apart, and no elementwise fusion of ``u`` and ``v`` sees it.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..model import CorrnetParams
from .records import ClipRecord, PairedDataset, StreamScoreSet

MODES = ("independent", "correlated", "correlation_only")


@dataclass(frozen=True)
class SyntheticSpec:
    class_count: int = 10
    clips_per_class: int = 20
    frames_per_clip: int = 24
    noise_scale: float = 0.3
    correlation_mode: str = "independent"
    seed: int = 0
    margin: float = 4.0

    def validate(self):
        for name in ("class_count", "clips_per_class", "frames_per_clip"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.noise_scale < 0:
            raise ConfigError(f"noise_scale must be >= 0, got {self.noise_scale}")
        if self.correlation_mode not in MODES:
            raise ConfigError(f"correlation_mode must be one of {MODES}, got {self.correlation_mode!r}")
        if self.correlation_mode == "correlation_only" and self.class_count % 2:
            raise ConfigError(f"correlation_only needs an even class count, got {self.class_count}")


def _clip_ids(total):
    width = max(2, len(str(total - 1)))
    return [f"c{i:0{width}d}" for i in range(total)]


def correlation_only_templates(label, class_count, sign, margin=4.0):
    """Noise-free ``(u, v)`` for one class of a pair and one spatial sign."""
    k = 2 * (label // 2)
    partner_sign = sign if label % 2 == 0 else -sign
    u = np.zeros(class_count)
    v = np.zeros(class_count)
    u[k], u[k + 1] = sign * margin, margin
    v[k], v[k + 1] = margin, partner_sign * margin
    return u, v


def _assemble(ids, labels, spatial, temporal, class_count, names=()):
    s_clips = [ClipRecord(i, y, f) for i, y, f in zip(ids, labels, spatial)]
    t_clips = [ClipRecord(i, y, f) for i, y, f in zip(ids, labels, temporal)]
    return PairedDataset(
        StreamScoreSet("spatial", class_count, s_clips),
        StreamScoreSet("temporal", class_count, t_clips),
        names,
    )


def generate_synthetic(spec):
    """Build a ``PairedDataset`` from ``spec``; clips interleave classes round-robin."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    B, T = spec.class_count, spec.frames_per_clip
    total = B * spec.clips_per_class
    labels, spatial, temporal = [], [], []
    for idx in range(total):
        y = idx % B
        if spec.correlation_mode == "correlation_only":
            sign = 1.0 if rng.random() < 0.5 else -1.0
            u, v = correlation_only_templates(y, B, sign, spec.margin)
        else:
            u = np.zeros(B)
            u[y] = spec.margin
            v = u.copy()
            if spec.correlation_mode == "correlated" and B > 1:
                confuser = (y + 1 + rng.integers(B - 1)) % B
                bump = rng.uniform(0.0, spec.margin)
                u[confuser] += bump
                v[confuser] += bump
        labels.append(y)
        spatial.append(u + spec.noise_scale * rng.standard_normal((T, B)))
        temporal.append(v + spec.noise_scale * rng.standard_normal((T, B)))
    return _assemble(_clip_ids(total), labels, spatial, temporal, B)


def planted_pair_params(class_count, gain):
    """A hand-set head whose logits are ``gain * (x_{2k,2k+1}, -x_{2k,2k+1})`` per pair.

    fc1 splits the input into positive and negative parts, fc2 passes them
    through, and fc3 recombines them, so the head is exactly linear in the
    correlation input.
    """
    B = class_count
    d = B * B
    W1 = np.vstack([np.eye(d), -np.eye(d)])
    A = np.zeros((B, d))
    for k in range(0, B, 2):
        cell = k * B + k + 1
        A[k, cell] = 1.0
        A[k + 1, cell] = -1.0
    W3 = gain * np.hstack([A, -A])
    return CorrnetParams(
        n=B, m=B, hidden=2 * d, B=B,
        W1=W1, b1=np.zeros(2 * d), W2=np.eye(2 * d), b2=np.zeros(2 * d),
        W3=W3, b3=np.zeros(B),
    )


def generate_gate_mixture(class_count=10, clips_per_class=20, frames_per_clip=24,
                          noise_scale=0.3, seed=0, margin=4.0):
    """Clips on which a correlation head helps when confident and hurts when not.

    Returns ``(dataset, params)`` where ``params`` is a planted head (see
    ``planted_pair_params``). Within each class, clips alternate between:

    * confident clips: ``correlation_only`` templates at full margin. The
      streams cannot separate the pair, the head resolves it with a large
      logit gap, and the fused distribution has low entropy.
    * hesitant clips: both streams favour the true class by a small amount
      ``margin / 8`` while the off-diagonal cell carries a small signal for
      the partner class. The head's push to the partner is just larger
      than the streams' margin, and the fused distribution is near flat.
    """
    if class_count < 4 or class_count % 2:
        raise ConfigError(f"gate mixture needs an even class count >= 4, got {class_count}")
    B, T = class_count, frames_per_clip
    rng = np.random.default_rng(seed)
    gain = 2.0 * np.sqrt(2.0) * margin
    small = margin / 8.0
    # temporal norm for hesitant clips so the head logit gap equals 2 * small
    bulk = np.sqrt(2.0) * margin / np.sqrt(B // 2 - 1)

    total = B * clips_per_class
    labels, spatial, temporal = [], [], []
    for idx in range(total):
        y = idx % B
        k = 2 * (y // 2)
        if (idx // B) % 2 == 0:
            sign = 1.0 if rng.random() < 0.5 else -1.0
            u, v = correlation_only_templates(y, B, sign, margin)
        else:
            u = np.zeros(B)
            v = np.zeros(B)
            u[y] = v[y] = small
            v[[j for j in range(0, B, 2) if j != k]] = -bulk
            if y == k:
                v[k + 1] = -small
            else:
                u[k] = small / 2
        labels.append(y)
        spatial.append(u + noise_scale * rng.standard_normal((T, B)))
        temporal.append(v + noise_scale * rng.standard_normal((T, B)))
    dataset = _assemble(_clip_ids(total), labels, spatial, temporal, B)
    return dataset, planted_pair_params(B, gain)
