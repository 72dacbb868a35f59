"""CAID-style per-sequence prediction files and per-residue profile CSVs.

A prediction file starts with ``>id`` followed by one tab-separated line per
residue: 1-based position, residue letter, score with 3 decimals, class. The
class is computed from the unrounded score before rounding.
"""

import csv
import io
from pathlib import Path

import numpy as np

from .datasets import _read_lines, safe_filename
from .errors import FormatError, ValidationError
from .metrics import binarize
from .trainer import PredictionProfile

PREDICTION_SUFFIX = ".caid"


def format_prediction(profile):
    scores = np.asarray(profile.scores, dtype=float)
    if len(profile.sequence) != scores.size:
        raise ValidationError(f"{profile.id}: {scores.size} scores for {len(profile.sequence)} residues")
    classes = binarize(scores)
    lines = [f">{profile.id}"]
    for i, (aa, s, c) in enumerate(zip(profile.sequence, scores, classes), start=1):
        lines.append(f"{i}\t{aa}\t{s:.3f}\t{int(c)}")
    return "\n".join(lines) + "\n"


def prediction_path(directory, rid):
    return Path(directory) / (safe_filename(rid) + PREDICTION_SUFFIX)


def write_prediction(profile, directory):
    path = prediction_path(directory, profile.id)
    path.write_text(format_prediction(profile), encoding="utf-8")
    return path


def parse_prediction(path):
    lines = [l for l in _read_lines(path) if l.strip()]
    if not lines or not lines[0].startswith(">") or not lines[0][1:].split():
        raise FormatError("prediction file must start with '>id'", path, "line 1")
    rid = lines[0][1:].split()[0]
    seq, scores, classes = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) < 3:
            raise FormatError("expected position, residue, score[, class]", path, f"line {lineno}")
        try:
            pos = int(parts[0])
            score = float(parts[2])
        except ValueError:
            raise FormatError("non-numeric position or score", path, f"line {lineno}") from None
        if pos != len(seq) + 1:
            raise FormatError(f"expected position {len(seq) + 1}, got {pos}", path, f"line {lineno}")
        if not 0.0 <= score <= 1.0:
            raise FormatError(f"score {score} outside [0, 1]", path, f"line {lineno}")
        seq.append(parts[1])
        scores.append(score)
        cls = int(parts[3]) if len(parts) > 3 and parts[3].strip() else int(score > 0.5)
        if cls not in (0, 1):
            raise FormatError(f"class must be 0 or 1, got {cls}", path, f"line {lineno}")
        classes.append(cls)
    return PredictionProfile(rid, "".join(seq), np.array(scores), np.array(classes, dtype=np.int8))


def read_prediction_dir(directory):
    """All prediction files in ``directory`` keyed by id, sorted by id."""
    out = {}
    for path in sorted(Path(directory).glob("*" + PREDICTION_SUFFIX)):
        p = parse_prediction(path)
        out[p.id] = p
    return dict(sorted(out.items()))


def profile_csv(profile):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["position", "residue", "score", "class"])
    for i, (aa, s, c) in enumerate(zip(profile.sequence, profile.scores, profile.classes), start=1):
        w.writerow([i, aa, f"{float(s):.3f}", int(c)])
    return buf.getvalue()
