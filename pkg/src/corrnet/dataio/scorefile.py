"""Line-oriented text format for per-frame stream scores.

One file per modality, UTF-8::

    #modality <name> classes <B>
    <clip_id>,<label>,<frame_index>,<s_0>,...,<s_{B-1}>

Single-label rows carry an integer class id. Multi-label rows carry
``|``-separated positive class ids and always contain at least one ``|``
(``3|`` for one positive, ``|`` for none) so the two kinds never collide.
Scores are written with ``repr`` and therefore round-trip exactly.
"""

import logging
import re
from pathlib import Path

import numpy as np

from ..errors import DataError, ParseError
from .records import ClipRecord, PairedDataset, StreamScoreSet, labels_equal

log = logging.getLogger(__name__)

_HEADER = re.compile(r"^#modality (\S+) classes (\d+)$")


def _format_label(label):
    if isinstance(label, int):
        return str(label)
    ids = np.flatnonzero(label).tolist()
    return "|".join(str(i) for i in ids) + ("|" if len(ids) < 2 else "")


def _parse_label(text, class_count, path, lineno):
    try:
        if "|" not in text:
            label = int(text)
            if not 0 <= label < class_count:
                raise ParseError(path, lineno, f"label {label} outside [0, {class_count})")
            return label
        ids = [int(tok) for tok in text.split("|") if tok]
    except ValueError:
        raise ParseError(path, lineno, f"bad label field {text!r}") from None
    hot = np.zeros(class_count, dtype=np.int8)
    for i in ids:
        if not 0 <= i < class_count:
            raise ParseError(path, lineno, f"label {i} outside [0, {class_count})")
        hot[i] = 1
    return hot


def write_dataset(score_set, path):
    """Write one modality's score set."""
    lines = [f"#modality {score_set.modality} classes {score_set.class_count}"]
    for clip in score_set.clips:
        if any(ch in clip.clip_id for ch in ",\n\r") or not clip.clip_id:
            raise DataError(f"clip id {clip.clip_id!r} cannot be written (empty or contains ',' / newline)")
        label = _format_label(clip.label)
        for t, row in enumerate(clip.frames):
            scores = ",".join(repr(float(x)) for x in row)
            lines.append(f"{clip.clip_id},{label},{t},{scores}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_stream(path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise ParseError(path, 1, "empty file, expected '#modality <name> classes <B>' header")
    header = _HEADER.match(lines[0].strip())
    if not header:
        raise ParseError(path, 1, f"bad header {lines[0]!r}")
    modality, class_count = header.group(1), int(header.group(2))
    if class_count < 1:
        raise ParseError(path, 1, "class count must be >= 1")

    order = []
    rows = {}
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != class_count + 3:
            raise ParseError(
                path, lineno,
                f"expected {class_count} scores, got {len(parts) - 3}",
            )
        clip_id, label_text, frame_text = parts[:3]
        if not clip_id:
            raise ParseError(path, lineno, "empty clip id")
        label = _parse_label(label_text, class_count, path, lineno)
        try:
            frame_index = int(frame_text)
            scores = [float(x) for x in parts[3:]]
        except ValueError as exc:
            raise ParseError(path, lineno, f"non-numeric field ({exc})") from None
        if not all(np.isfinite(scores)):
            raise ParseError(path, lineno, "non-finite score")
        if clip_id not in rows:
            order.append(clip_id)
            rows[clip_id] = {"label": label, "line": lineno, "frames": {}}
        entry = rows[clip_id]
        if not labels_equal(entry["label"], label):
            raise ParseError(path, lineno, f"clip {clip_id!r} changes label")
        if frame_index in entry["frames"]:
            raise ParseError(path, lineno, f"clip {clip_id!r} repeats frame {frame_index}")
        entry["frames"][frame_index] = scores

    clips = []
    for clip_id in order:
        entry = rows[clip_id]
        idx = sorted(entry["frames"])
        if idx != list(range(len(idx))):
            raise ParseError(path, entry["line"], f"clip {clip_id!r} frame indices are not 0..{len(idx) - 1}")
        frames = np.array([entry["frames"][i] for i in idx])
        clips.append(ClipRecord(clip_id, entry["label"], frames))
    return StreamScoreSet(modality, class_count, clips)


def load_dataset(spatial_path, temporal_path, class_names=()):
    """Read both modality files and align them on their common clip ids.

    Clips present in only one file are dropped with a warning; an empty
    intersection is an error.
    """
    for p in (spatial_path, temporal_path):
        if not Path(p).is_file():
            raise FileNotFoundError(f"no such score file: {p}")
    spatial = read_stream(spatial_path)
    temporal = read_stream(temporal_path)
    if spatial.class_count != temporal.class_count:
        raise DataError(
            f"class counts differ: {spatial_path} has {spatial.class_count}, "
            f"{temporal_path} has {temporal.class_count}"
        )
    t_by_id = temporal.by_id()
    common = [c.clip_id for c in spatial.clips if c.clip_id in t_by_id]
    if not common:
        raise DataError(f"no clip ids shared between {spatial_path} and {temporal_path}")
    dropped = len(spatial) + len(temporal) - 2 * len(common)
    if dropped:
        log.warning("dropping %d clips that appear in only one modality", dropped)
    keep = set(common)
    s_clips = [c for c in spatial.clips if c.clip_id in keep]
    t_clips = [t_by_id[c.clip_id] for c in s_clips]
    for s, t in zip(s_clips, t_clips):
        if not labels_equal(s.label, t.label):
            raise DataError(f"clip {s.clip_id!r}: label differs between {spatial_path} and {temporal_path}")
    return PairedDataset(
        StreamScoreSet(spatial.modality, spatial.class_count, s_clips),
        StreamScoreSet(temporal.modality, temporal.class_count, t_clips),
        tuple(class_names),
    )


def write_paired(dataset, out_dir):
    """Write ``spatial.scores`` and ``temporal.scores`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sp, tp = out_dir / "spatial.scores", out_dir / "temporal.scores"
    write_dataset(dataset.spatial, sp)
    write_dataset(dataset.temporal, tp)
    return sp, tp
