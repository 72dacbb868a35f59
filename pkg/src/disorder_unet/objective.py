"""Training objective: masked binary cross-entropy minus soft MCC.

Each function returns ``(value, grad)`` where ``grad`` is the derivative with
respect to the predicted disorder probabilities, shaped like ``y_pred`` and zero
outside the mask.
"""

import numpy as np

from .errors import ValidationError

PROB_CLIP = 1e-7
MCC_EPS = 1e-7


def _prepare(y_true, y_pred, mask):
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise ValidationError(f"target shape {y_true.shape} differs from prediction shape {y_pred.shape}")
    if mask is None:
        mask = np.ones(y_true.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != y_true.shape:
            raise ValidationError(f"mask shape {mask.shape} differs from target shape {y_true.shape}")
    if not mask.any():
        raise ValidationError("mask selects no residues")
    inside = (y_pred > PROB_CLIP) & (y_pred < 1.0 - PROB_CLIP)
    p = np.clip(y_pred, PROB_CLIP, 1.0 - PROB_CLIP)
    # masked-out targets may hold anything (padding, unknown labels)
    y = np.where(mask, y_true, 0.0)
    return y, p, mask, inside


def bce(y_true, y_pred, mask=None):
    """Mean negative log-likelihood over masked-in residues."""
    y, p, mask, inside = _prepare(y_true, y_pred, mask)
    n = mask.sum()
    terms = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    value = float(np.sum(terms, where=mask) / n)
    grad = np.where(mask & inside, (p - y) / (p * (1.0 - p)) / n, 0.0)
    return value, grad


def soft_counts(y, p, mask):
    m = mask.astype(float)
    tp = np.sum(m * y * p)
    tn = np.sum(m * (1.0 - y) * (1.0 - p))
    fp = np.sum(m * (1.0 - y) * p)
    fn = np.sum(m * y * (1.0 - p))
    return tp, tn, fp, fn


def soft_mcc(y_true, y_pred, mask=None, eps=MCC_EPS):
    """MCC evaluated on soft confusion counts pooled over the masked residues."""
    y, p, mask, inside = _prepare(y_true, y_pred, mask)
    tp, tn, fp, fn = soft_counts(y, p, mask)
    a, b, c, d = tp + fp, tp + fn, tn + fp, tn + fn
    num = tp * tn - fp * fn
    den = a * b * c * d + eps
    root = np.sqrt(den)
    value = num / root
    # d(value)/d(count) for each of the four counts
    dden = {
        "tp": b * c * d + a * c * d,
        "tn": a * b * d + a * b * c,
        "fp": b * c * d + a * b * d,
        "fn": a * c * d + a * b * c,
    }
    dnum = {"tp": tn, "tn": tp, "fp": -fn, "fn": -fp}
    dv = {k: dnum[k] / root - 0.5 * num * dden[k] / den / root for k in dnum}
    # dTP/dp = y, dTN/dp = -(1-y), dFP/dp = (1-y), dFN/dp = -y
    dp = dv["tp"] * y - dv["tn"] * (1.0 - y) + dv["fp"] * (1.0 - y) - dv["fn"] * y
    grad = np.where(mask & inside, dp, 0.0)
    return float(value), grad


def composite_loss(y_true, y_pred, mask=None, mcc_mode="pooled"):
    """``bce - soft_mcc`` over a batch.

    ``mcc_mode="pooled"`` pools soft counts over every masked residue in the
    batch; ``"per_sequence"`` averages one MCC per row of a 2D batch (rows
    without masked residues are skipped).
    """
    b_val, b_grad = bce(y_true, y_pred, mask)
    if mcc_mode == "pooled":
        m_val, m_grad = soft_mcc(y_true, y_pred, mask)
    elif mcc_mode == "per_sequence":
        y_true = np.atleast_2d(np.asarray(y_true, dtype=float))
        y_pred = np.atleast_2d(np.asarray(y_pred, dtype=float))
        mask = np.ones(y_true.shape, bool) if mask is None else np.atleast_2d(np.asarray(mask, bool))
        rows = [i for i in range(y_true.shape[0]) if mask[i].any()]
        m_grad = np.zeros(y_true.shape)
        m_val = 0.0
        for i in rows:
            v, g = soft_mcc(y_true[i], y_pred[i], mask[i])
            m_val += v / len(rows)
            m_grad[i] = g / len(rows)
        m_grad = m_grad.reshape(b_grad.shape)
    else:
        raise ValidationError(f"unknown mcc_mode {mcc_mode!r}")
    return b_val - m_val, b_grad - m_grad
