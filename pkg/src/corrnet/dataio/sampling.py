"""Frame selection and clip-level score aggregation."""

import numpy as np

from ..errors import ConfigError, DataError

TOTAL_FRAMES = 24
SEGMENTS = 3


def equally_spaced(num_frames, total_frames=TOTAL_FRAMES):
    """``floor(i * num_frames / total_frames)`` for ``i`` in ``0..total_frames-1``."""
    if num_frames < 1:
        raise DataError("clip has no frames")
    return (np.arange(total_frames) * num_frames) // total_frames


def segment_sample(clip, total_frames=TOTAL_FRAMES, K=SEGMENTS, rng=None, mode="test_all"):
    """Frame indices for one clip (a ``ClipRecord`` or a frame count).

    ``test_all`` returns all ``total_frames`` equally spaced indices;
    ``train_random`` splits them into ``K`` equal consecutive segments and
    draws one index uniformly from each.
    """
    if K < 1 or total_frames % K:
        raise ConfigError(f"K={K} must divide total_frames={total_frames}")
    num_frames = getattr(clip, "num_frames", clip)
    base = equally_spaced(num_frames, total_frames)
    if mode == "test_all":
        return base
    if mode != "train_random":
        raise ConfigError(f"unknown sampling mode {mode!r}")
    if rng is None:
        raise ConfigError("train_random sampling needs an rng")
    seg = total_frames // K
    picks = np.arange(K) * seg + rng.integers(0, seg, size=K)
    return base[picks]


def clip_scores(dataset, mode="test_all", rng=None, total_frames=TOTAL_FRAMES, K=SEGMENTS):
    """Per-clip ``(u, v)`` arrays of shape ``(N, B)`` by averaging sampled frames.

    Each modality is sampled independently since frame counts may differ.
    """
    us, vs = [], []
    for s, t in dataset.pairs():
        us.append(s.frames[segment_sample(s.num_frames, total_frames, K, rng, mode)].mean(axis=0))
        vs.append(t.frames[segment_sample(t.num_frames, total_frames, K, rng, mode)].mean(axis=0))
    B = dataset.class_count
    return np.array(us).reshape(-1, B), np.array(vs).reshape(-1, B)
