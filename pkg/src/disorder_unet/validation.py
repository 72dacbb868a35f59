"""Input checks shared by the estimator and the CLI."""

import numpy as np

from .errors import ShapeError, ValidationError
from .metrics import UNKNOWN


def check_embedding_list(X, n_features=None):
    """Coerce ``X`` to a list of finite float64 ``(L, D)`` arrays with a common ``D``."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = [X]
    X = [np.asarray(x, dtype=np.float64) for x in X]
    if not X:
        raise ValidationError("expected at least one sequence")
    for i, x in enumerate(X):
        if x.ndim != 2 or x.shape[0] == 0:
            raise ShapeError(f"sequence {i}: expected a non-empty (L, D) array, got shape {x.shape}")
        if not np.isfinite(x).all():
            raise ValidationError(f"sequence {i}: embedding has non-finite values")
        d = n_features if n_features is not None else X[0].shape[1]
        if x.shape[1] != d:
            raise ShapeError(f"sequence {i}: channel axis has {x.shape[1]} features, expected {d}")
    return X


def check_label_list(y, X):
    if len(y) != len(X):
        raise ValidationError(f"{len(y)} label tracks for {len(X)} sequences")
    out = []
    for i, (lab, x) in enumerate(zip(y, X)):
        lab = np.asarray(lab, dtype=np.int8)
        if lab.shape != (x.shape[0],):
            raise ShapeError(f"sequence {i}: {lab.size} labels for {x.shape[0]} residues")
        if not np.isin(lab, (0, 1, UNKNOWN)).all():
            raise ValidationError(f"sequence {i}: labels must be 0, 1 or {UNKNOWN} (unknown)")
        out.append(lab)
    if not any((lab != UNKNOWN).any() for lab in out):
        raise ValidationError("no annotated residues in the training labels")
    return out


def check_sequences(sequences, X):
    if sequences is None:
        return None
    if len(sequences) != len(X):
        raise ValidationError(f"{len(sequences)} sequences for {len(X)} embeddings")
    for i, (s, x) in enumerate(zip(sequences, X)):
        if len(s) != x.shape[0]:
            raise ShapeError(f"sequence {i}: {len(s)} letters for {x.shape[0]} embedding rows")
    return list(sequences)
