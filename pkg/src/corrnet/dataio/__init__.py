"""Stream score datasets: containers, text files, frame sampling, synthetic data."""

from .records import (
    ClipRecord,
    PairedDataset,
    StreamScoreSet,
    holdout_split,
    is_hit,
    split_by_class,
)
from .sampling import clip_scores, equally_spaced, segment_sample
from .scorefile import load_dataset, read_stream, write_dataset, write_paired
from .synthetic import (
    SyntheticSpec,
    correlation_only_templates,
    generate_gate_mixture,
    generate_synthetic,
    planted_pair_params,
)

__all__ = [
    "ClipRecord", "PairedDataset", "StreamScoreSet", "SyntheticSpec",
    "clip_scores", "correlation_only_templates", "equally_spaced",
    "generate_gate_mixture", "generate_synthetic", "holdout_split", "is_hit",
    "load_dataset", "planted_pair_params", "read_stream", "segment_sample",
    "split_by_class", "write_dataset", "write_paired",
]
