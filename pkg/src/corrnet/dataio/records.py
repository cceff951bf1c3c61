"""In-memory containers for per-frame stream scores."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError


@dataclass(frozen=True, eq=False)
class ClipRecord:
    """One clip of one modality.

    ``label`` is an ``int`` class id for single-label data or a 0/1 ``int8``
    array of length ``class_count`` for multi-label data. ``frames`` has
    shape ``(t, class_count)`` of raw scores.
    """

    clip_id: str
    label: object
    frames: np.ndarray

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise DataError(f"clip {self.clip_id!r}: frames must be (t>=1, B), got {frames.shape}")
        frames.flags.writeable = False
        object.__setattr__(self, "frames", frames)
        if not isinstance(self.label, (int, np.integer)):
            label = np.array(self.label, dtype=np.int8)
            label.flags.writeable = False
            object.__setattr__(self, "label", label)
        else:
            object.__setattr__(self, "label", int(self.label))

    @property
    def multilabel(self):
        return not isinstance(self.label, int)

    @property
    def num_frames(self):
        return self.frames.shape[0]


def labels_equal(a, b):
    if isinstance(a, int) or isinstance(b, int):
        return isinstance(a, int) and isinstance(b, int) and a == b
    return a.shape == b.shape and bool(np.all(a == b))


def check_label(label, class_count, where):
    if isinstance(label, int):
        if not 0 <= label < class_count:
            raise DataError(f"{where}: label {label} outside [0, {class_count})")
    else:
        if label.shape != (class_count,) or not np.all((label == 0) | (label == 1)):
            raise DataError(f"{where}: multi-hot label must be 0/1 of length {class_count}")


def is_hit(pred, label):
    """Top-1 correctness: equal class id, or a positive in a multi-hot label."""
    if isinstance(label, int):
        return int(pred) == label
    return bool(label[int(pred)])


@dataclass(frozen=True, eq=False)
class StreamScoreSet:
    modality: str
    class_count: int
    clips: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "clips", tuple(self.clips))
        if self.class_count < 1:
            raise DataError(f"class_count must be >= 1, got {self.class_count}")
        seen = set()
        for clip in self.clips:
            if clip.clip_id in seen:
                raise DataError(f"duplicate clip id {clip.clip_id!r} in {self.modality}")
            seen.add(clip.clip_id)
            if clip.frames.shape[1] != self.class_count:
                raise DataError(
                    f"clip {clip.clip_id!r} has {clip.frames.shape[1]} scores per frame, "
                    f"expected {self.class_count}"
                )
            check_label(clip.label, self.class_count, f"clip {clip.clip_id!r}")

    def __len__(self):
        return len(self.clips)

    def by_id(self):
        return {c.clip_id: c for c in self.clips}


@dataclass(frozen=True, eq=False)
class PairedDataset:
    """Spatial and temporal score sets over the same clips, in the same order."""

    spatial: StreamScoreSet
    temporal: StreamScoreSet
    class_names: tuple = ()

    def __post_init__(self):
        if self.spatial.class_count != self.temporal.class_count:
            raise DataError(
                f"class counts differ: spatial {self.spatial.class_count}, "
                f"temporal {self.temporal.class_count}"
            )
        if len(self.spatial) != len(self.temporal):
            raise DataError("spatial and temporal sets hold different clip counts")
        for s, t in zip(self.spatial.clips, self.temporal.clips):
            if s.clip_id != t.clip_id:
                raise DataError(f"clip order differs: {s.clip_id!r} vs {t.clip_id!r}")
            if not labels_equal(s.label, t.label):
                raise DataError(f"clip {s.clip_id!r}: labels differ between modalities")
        names = tuple(self.class_names) or tuple(str(i) for i in range(self.class_count))
        if len(names) != self.class_count:
            raise DataError(f"{len(names)} class names for {self.class_count} classes")
        object.__setattr__(self, "class_names", names)

    @property
    def class_count(self):
        return self.spatial.class_count

    @property
    def clip_ids(self):
        return [c.clip_id for c in self.spatial.clips]

    @property
    def labels(self):
        return [c.label for c in self.spatial.clips]

    @property
    def multilabel(self):
        return any(c.multilabel for c in self.spatial.clips)

    def __len__(self):
        return len(self.spatial)

    def pairs(self):
        return zip(self.spatial.clips, self.temporal.clips)

    def subset(self, indices):
        indices = list(indices)
        return PairedDataset(
            spatial=StreamScoreSet(self.spatial.modality, self.class_count,
                                   [self.spatial.clips[i] for i in indices]),
            temporal=StreamScoreSet(self.temporal.modality, self.class_count,
                                    [self.temporal.clips[i] for i in indices]),
            class_names=self.class_names,
        )


def split_by_class(dataset, first_per_class):
    """Split a single-label dataset into the first ``k`` clips of each class and the rest."""
    counts = {}
    head, tail = [], []
    for i, label in enumerate(dataset.labels):
        if not isinstance(label, int):
            raise DataError("split_by_class needs single-label data")
        counts[label] = counts.get(label, 0) + 1
        (head if counts[label] <= first_per_class else tail).append(i)
    return dataset.subset(head), dataset.subset(tail)


def holdout_split(dataset, val_fraction, seed):
    """Random disjoint (train, val) split; both sides keep at least one clip."""
    if not 0 < val_fraction < 1:
        raise DataError(f"val_fraction must be in (0, 1), got {val_fraction}")
    if len(dataset) < 2:
        raise DataError("need at least two clips to split")
    order = np.random.default_rng(seed).permutation(len(dataset))
    n_val = min(max(1, int(round(val_fraction * len(dataset)))), len(dataset) - 1)
    val = sorted(order[:n_val].tolist())
    train = sorted(order[n_val:].tolist())
    return dataset.subset(train), dataset.subset(val)
