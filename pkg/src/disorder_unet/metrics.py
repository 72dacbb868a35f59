"""Evaluation metrics over per-residue scores with three-state labels.

Labels use ``0`` for ordered, ``1`` for disordered and ``-1`` (:data:`UNKNOWN`)
for residues without annotation; unknown residues never reach a metric.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import UndefinedMetricError, ValidationError

UNKNOWN = -1


@dataclass
class ScoredResidues:
    """Scores and labels for one target (or a pooled set of targets)."""

    scores: np.ndarray
    labels: np.ndarray
    target_id: str = ""

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise ValidationError(
                f"{self.target_id or 'target'}: scores {self.scores.shape} and labels {self.labels.shape} differ"
            )
        if not np.isin(self.labels, (0, 1, UNKNOWN)).all():
            raise ValidationError(f"{self.target_id or 'target'}: labels must be 0, 1 or unknown")

    def known(self):
        keep = self.labels != UNKNOWN
        return self.scores[keep], self.labels[keep]

    @classmethod
    def concat(cls, items, target_id="pooled"):
        return cls(
            np.concatenate([s.scores for s in items]),
            np.concatenate([s.labels for s in items]),
            target_id,
        )


@dataclass(frozen=True)
class Counts:
    tp: int
    fp: int
    tn: int
    fn: int


def binarize(score, threshold=0.5):
    """1 iff ``score > threshold`` (strict); works elementwise on arrays."""
    out = np.asarray(score) > threshold
    return out.astype(np.int8) if out.ndim else int(out)


def confusion(scored, threshold=0.5):
    scores, labels = scored.known()
    if labels.size == 0:
        raise UndefinedMetricError(f"{scored.target_id or 'target'}: no annotated residues")
    pred = np.asarray(scores) > threshold
    pos = labels == 1
    return Counts(
        tp=int(np.sum(pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        tn=int(np.sum(~pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
    )


def mcc_binary(counts):
    """Matthews correlation; 0 when any marginal is empty."""
    tp, fp, tn, fn = (float(v) for v in (counts.tp, counts.fp, counts.tn, counts.fn))
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if den == 0:
        return 0.0
    return (tp * tn - fp * fn) / np.sqrt(den)


def f1(counts):
    den = 2 * counts.tp + counts.fp + counts.fn
    return 0.0 if den == 0 else 2 * counts.tp / den


def is_degenerate(counts):
    return 0 in (
        counts.tp + counts.fp,
        counts.tp + counts.fn,
        counts.tn + counts.fp,
        counts.tn + counts.fn,
    )


def roc_auc(scored):
    """Exact ROC-AUC via the Mann-Whitney rank statistic, ties counted 1/2."""
    scores, labels = scored.known()
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"{scored.target_id or 'target'}: undefined AUC, needs both classes "
            f"(positives={n_pos}, negatives={n_neg})"
        )
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class MetricRow:
    target_id: str
    n_residues: int
    n_disordered: int
    auc: float | None
    mcc: float
    f1: float
    degenerate: bool
    counts: Counts | None = field(default=None, repr=False)


def score_target(scored, threshold=0.5):
    counts = confusion(scored, threshold)
    try:
        auc = roc_auc(scored)
    except UndefinedMetricError:
        auc = None
    return MetricRow(
        target_id=scored.target_id,
        n_residues=counts.tp + counts.fp + counts.tn + counts.fn,
        n_disordered=counts.tp + counts.fn,
        auc=auc,
        mcc=mcc_binary(counts),
        f1=f1(counts),
        degenerate=is_degenerate(counts),
        counts=counts,
    )


def aggregate(targets, mode="both", threshold=0.5):
    """Dataset-level metrics.

    ``pooled`` concatenates every annotated residue and scores once;
    ``per_target`` averages per-target metrics over the targets where each is
    defined. ``mode="both"`` returns a dict with both rows.
    """
    targets = list(targets)
    if not targets:
        raise ValidationError("aggregate needs at least one target")
    out = {}
    if mode in ("pooled", "both"):
        out["pooled"] = score_target(ScoredResidues.concat(targets), threshold)
    if mode in ("per_target", "both"):
        rows = []
        for t in targets:
            try:
                rows.append(score_target(t, threshold))
            except UndefinedMetricError:
                continue
        if not rows:
            raise UndefinedMetricError("no target has annotated residues")
        aucs = [r.auc for r in rows if r.auc is not None]
        out["per_target"] = MetricRow(
            target_id="per_target_mean",
            n_residues=sum(r.n_residues for r in rows),
            n_disordered=sum(r.n_disordered for r in rows),
            auc=float(np.mean(aucs)) if aucs else None,
            mcc=float(np.mean([r.mcc for r in rows])),
            f1=float(np.mean([r.f1 for r in rows])),
            degenerate=any(r.degenerate for r in rows),
        )
    if mode not in ("pooled", "per_target", "both"):
        raise ValidationError(f"unknown aggregation mode {mode!r}")
    return out if mode == "both" else out[mode]
