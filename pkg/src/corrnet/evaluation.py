"""Accuracy, mAP, gate-entropy histograms, comparison tables and top-k listings."""

import csv
import dataclasses
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataio import clip_scores, is_hit
from .errors import ConfigError, DataError, DimensionError, MetricError
from .fusion import FusionConfig, apply_fusion, gate_entropy
from .model import predict_logits
from .training import check_compatible


@dataclass(frozen=True)
class EvalResult:
    strategy: str
    top1: float
    per_class: np.ndarray
    corrnet_inclusion_rate: float
    mean_gate_entropy: float
    mean_ap: float = float("nan")
    num_clips: int = 0


@dataclass(frozen=True)
class TopKListing:
    clip_id: str
    spatial: list
    temporal: list
    sum: list
    corrnet: list


def _clip_logits(params, U, V, config, threads):
    """Head logits per clip; each clip is its own forward call so the thread count cannot change bits."""
    def one(i):
        return predict_logits(params, U[i], V[i], config.eps, config.normalize_rows)

    if threads <= 1:
        rows = [one(i) for i in range(len(U))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(len(U))))
    return np.array(rows).reshape(len(U), -1)


def fuse_dataset(dataset, params, config, sampling_mode="test_all", seed=0, threads=1):
    """Clip-level fusion decisions for every clip, in dataset order."""
    if sampling_mode not in ("test_all", "train_random"):
        raise ConfigError(f"unknown sampling mode {sampling_mode!r}")
    rng = np.random.default_rng(seed) if sampling_mode == "train_random" else None
    U, V = clip_scores(dataset, sampling_mode, rng)
    Z = None
    if config.uses_corrnet:
        if params is None:
            raise ConfigError(f"strategy {config.strategy!r} needs trained head parameters")
        check_compatible(dataset, params)
        Z = _clip_logits(params, U, V, config, threads)
    decisions = [apply_fusion(config, None if Z is None else Z[i], U[i], V[i]) for i in range(len(U))]
    return decisions, (Z, U, V)


def evaluate(dataset, params, fusion_config, sampling_mode="test_all", seed=0, threads=1):
    """Top-1 accuracy of one fusion strategy, averaging the 24 sampled frames per modality."""
    if len(dataset) == 0:
        raise DataError("cannot evaluate an empty dataset")
    decisions, _ = fuse_dataset(dataset, params, fusion_config, sampling_mode, seed, threads)
    labels = dataset.labels
    hits = np.array([is_hit(np.argmax(d.scores), y) for d, y in zip(decisions, labels)])

    B = dataset.class_count
    per_class = np.full(B, np.nan)
    if dataset.multilabel:
        for c in range(B):
            mask = np.array([bool(y[c]) for y in labels])
            if mask.any():
                per_class[c] = hits[mask].mean()
        try:
            m_ap = mean_average_precision([d.scores for d in decisions], labels)
        except MetricError:
            m_ap = float("nan")
    else:
        y = np.array(labels)
        for c in range(B):
            mask = y == c
            if mask.any():
                per_class[c] = hits[mask].mean()
        m_ap = float("nan")

    if fusion_config.strategy == "corrnet_shannon":
        inclusion = float(np.mean([d.corrnet_included for d in decisions]))
        mean_entropy = float(np.mean([d.gate_entropy for d in decisions]))
    else:
        inclusion = 1.0 if fusion_config.strategy == "corrnet" else 0.0
        mean_entropy = float("nan")
    return EvalResult(fusion_config.strategy, float(hits.mean()), per_class,
                      inclusion, mean_entropy, m_ap, len(dataset))


def average_precision(scores, positives):
    """Non-interpolated AP: mean precision at the rank of each positive.

    Tied scores are ordered by their original index (stable sort).
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives).astype(bool)
    if positives.sum() == 0:
        raise MetricError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    rel = positives[order]
    ranks = np.flatnonzero(rel) + 1
    precision_at_hits = np.arange(1, len(ranks) + 1) / ranks
    return float(precision_at_hits.mean())


def mean_average_precision(scores, labels):
    """Macro-average of per-class AP over classes with at least one positive clip.

    ``scores`` is ``(num_clips, B)``; ``labels`` is ``(num_clips, B)`` multi-hot
    (class ids are accepted and one-hot encoded).
    """
    S = np.asarray(scores, dtype=np.float64)
    if S.ndim != 2:
        raise DimensionError(f"scores must be (clips, classes), got {S.shape}")
    Y = np.zeros_like(S, dtype=bool)
    for i, y in enumerate(labels):
        if isinstance(y, (int, np.integer)):
            Y[i, int(y)] = True
        else:
            Y[i] = np.asarray(y).astype(bool)
    aps = [average_precision(S[:, c], Y[:, c]) for c in range(S.shape[1]) if Y[:, c].any()]
    if not aps:
        raise MetricError("no positive labels in any class")
    return float(np.mean(aps))


def entropy_histogram(subsets, params, fusion_config, bins=20):
    """Gate-entropy counts per named subset over ``bins`` equal bins of ``[0, log2 B]``.

    ``subsets`` maps a name (e.g. ``"train"``, ``"val"``) to a dataset.
    Returns ``(edges, {name: counts})``.
    """
    if bins < 1:
        raise ConfigError(f"bins must be >= 1, got {bins}")
    if not subsets:
        raise ConfigError("no subsets given")
    B = params.B
    edges = np.linspace(0.0, np.log2(B), bins + 1)
    counts = {}
    for name, ds in subsets.items():
        check_compatible(ds, params)
        U, V = clip_scores(ds)
        Z = predict_logits(params, U, V, fusion_config.eps, fusion_config.normalize_rows)
        w = fusion_config.corrnet_weight if fusion_config.weighted_gate else 1.0
        ent = np.array([gate_entropy(w * z, u, v) for z, u, v in zip(Z, U, V)])
        idx = np.clip(np.searchsorted(edges, ent, side="right") - 1, 0, bins - 1)
        counts[name] = np.bincount(idx, minlength=bins)
    return edges, counts


def histogram_csv(edges, counts):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = list(counts)
    writer.writerow(["bin_lo", "bin_hi"] + names)
    for b in range(len(edges) - 1):
        writer.writerow([f"{edges[b]:.6f}", f"{edges[b + 1]:.6f}"] + [int(counts[n][b]) for n in names])
    return buf.getvalue()


def comparison_table(dataset, params, strategies, base_config=None,
                     sampling_mode="test_all", seed=0, threads=1):
    """One ``EvalResult`` per strategy, in the order given.

    Weights, threshold and eps come from ``base_config``; only the strategy varies.
    """
    if not strategies:
        raise ConfigError("no strategies given")
    base = base_config or FusionConfig()
    return [evaluate(dataset, params, dataclasses.replace(base, strategy=s),
                     sampling_mode, seed, threads)
            for s in strategies]


def _pct(x):
    return "-" if np.isnan(x) else f"{100.0 * x:.1f}"


def _fmt_bits(x):
    return "-" if np.isnan(x) else f"{x:.3f}"


def table_text(rows):
    header = ["strategy", "top1", "corrnet_in", "gate_H", "mAP"]
    body = [[r.strategy, _pct(r.top1), _pct(r.corrnet_inclusion_rate),
             _fmt_bits(r.mean_gate_entropy), _pct(r.mean_ap)] for r in rows]
    widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) if i == 0 else cell.rjust(w)
                       for i, (cell, w) in enumerate(zip(line, widths)))
             for line in [header] + body]
    return "\n".join(lines) + "\n"


def table_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["strategy", "top1_pct", "corrnet_inclusion_pct", "mean_gate_entropy_bits", "map_pct", "clips"])
    for r in rows:
        writer.writerow([r.strategy, _pct(r.top1), _pct(r.corrnet_inclusion_rate),
                         _fmt_bits(r.mean_gate_entropy), _pct(r.mean_ap), r.num_clips])
    return buf.getvalue()


def per_class_csv(result, class_names):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["class_id", "class_name", "accuracy_pct"])
    for c, acc in enumerate(result.per_class):
        writer.writerow([c, class_names[c], _pct(acc)])
    return buf.getvalue()


def topk_listing(dataset, params, clip_id, k=5, eps=None, normalize_rows=True):
    """Ranked ``(class_id, score)`` lists for spatial, temporal, sum and head logits."""
    ids = dataset.clip_ids
    if clip_id not in ids:
        raise DataError(f"unknown clip id {clip_id!r}")
    B = dataset.class_count
    if not 1 <= k <= B:
        raise ConfigError(f"k must be in [1, {B}], got {k}")
    check_compatible(dataset, params)
    sub = dataset.subset([ids.index(clip_id)])
    U, V = clip_scores(sub)
    kw = {} if eps is None else {"eps": eps}
    z = predict_logits(params, U[0], V[0], normalize=normalize_rows, **kw)

    def ranked(scores):
        order = np.argsort(-scores, kind="stable")[:k]
        return [(int(c), float(scores[c])) for c in order]

    return TopKListing(clip_id, ranked(U[0]), ranked(V[0]), ranked(U[0] + V[0]), ranked(z))
