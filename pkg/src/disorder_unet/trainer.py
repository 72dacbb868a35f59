"""Optimization, batching, early stopping, stratified folds and ensembling."""

import csv
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

from .checkpoint import Checkpoint
from .datasets import EmbeddingStandardizer
from .errors import ShapeError, ValidationError
from .metrics import UNKNOWN, binarize
from .objective import composite_loss
from .unet import backward_batch, build_input, forward, forward_batch, init_model

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    lr0: float = 1e-3
    lr_decay_factor: float = 10.0
    plateau_patience: int = 1
    early_stop_patience: int = 5
    min_improvement: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    max_epochs: int = 100
    mcc_mode: str = "pooled"
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValidationError("batch_size and max_epochs must be >= 1")
        if self.lr0 <= 0 or self.lr_decay_factor <= 0:
            raise ValidationError("learning rate and decay factor must be positive")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ValidationError("patience values must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps_adam <= 0:
            raise ValidationError("invalid Adam hyperparameters")
        if self.mcc_mode not in ("pooled", "per_sequence"):
            raise ValidationError(f"unknown mcc_mode {self.mcc_mode!r}")

    def to_dict(self):
        return dict(self.__dict__)


# -- Adam --


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update. Returns new ``(params, state)``; inputs are not mutated."""
    if set(grads) != set(params):
        raise ShapeError(f"gradient names differ from parameter names: {sorted(set(grads) ^ set(params))[:5]}")
    t = state.t + 1
    new_params, m, v = {}, {}, {}
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {k} has shape {g.shape}, parameter has {p.shape}")
        m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g
        new_params[k] = p - lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + eps)
    return new_params, AdamState(m, v, t)


# -- batching --


@dataclass
class Sample:
    """One training sequence: model input ``(L, C)`` and labels ``(L,)``."""

    id: str
    x: np.ndarray
    y: np.ndarray

    @property
    def length(self):
        return self.x.shape[0]

    @property
    def disorder_ratio(self):
        known = self.y != UNKNOWN
        return float(np.mean(self.y[known] == 1)) if known.any() else 0.0


@dataclass
class Batch:
    ids: list
    x: np.ndarray
    y: np.ndarray
    mask: np.ndarray  # real residues
    label_mask: np.ndarray  # real and annotated residues


def pad_batch(samples, length_multiple):
    longest = max(s.length for s in samples)
    lp = -(-longest // length_multiple) * length_multiple
    c = samples[0].x.shape[1]
    x = np.zeros((len(samples), lp, c))
    y = np.zeros((len(samples), lp))
    mask = np.zeros((len(samples), lp), dtype=bool)
    label_mask = np.zeros((len(samples), lp), dtype=bool)
    for i, s in enumerate(samples):
        n = s.length
        x[i, :n] = s.x
        known = s.y != UNKNOWN
        y[i, :n] = np.where(known, s.y, 0)
        mask[i, :n] = True
        label_mask[i, :n] = known
    return Batch([s.id for s in samples], x, y, mask, label_mask)


def make_batches(samples, batch_size=8, seed=0, epoch=0, length_multiple=1, shuffle=True):
    """Split samples into padded batches of at most ``batch_size``.

    The order is shuffled deterministically from ``(seed, epoch)``.
    """
    if not samples:
        raise ValidationError("cannot batch an empty dataset")
    order = np.arange(len(samples))
    if shuffle:
        order = np.random.default_rng([seed, epoch]).permutation(len(samples))
    return [
        pad_batch([samples[i] for i in order[j:j + batch_size]], length_multiple)
        for j in range(0, len(samples), batch_size)
    ]


# -- schedule and history --


class PlateauSchedule:
    """Learning-rate drops on plateaus plus early stopping.

    ``update(val_loss)`` returns ``(improved, stop)``. A loss improves when it
    is lower than the best so far by at least ``min_improvement``.
    """

    def __init__(self, lr0, factor=10.0, plateau_patience=1, early_stop_patience=5, min_improvement=1e-6):
        self.lr = lr0
        self.factor = factor
        self.plateau_patience = plateau_patience
        self.early_stop_patience = early_stop_patience
        self.min_improvement = min_improvement
        self.best = np.inf
        self.best_epoch = None
        self.epoch = 0
        self.bad_epochs = 0
        self._plateau = 0

    def update(self, val_loss):
        self.epoch += 1
        if val_loss < self.best - self.min_improvement:
            self.best = val_loss
            self.best_epoch = self.epoch
            self.bad_epochs = 0
            self._plateau = 0
            return True, False
        self.bad_epochs += 1
        self._plateau += 1
        if self._plateau >= self.plateau_patience:
            self.lr /= self.factor
            self._plateau = 0
        return False, self.bad_epochs >= self.early_stop_patience


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    best_epoch: int | None = None  # 1-based

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "lr", "is_best"])
        for i, (tl, vl, lr) in enumerate(zip(self.train_loss, self.val_loss, self.lr), start=1):
            w.writerow([i, repr(float(tl)), repr(float(vl)), repr(float(lr)), int(i == self.best_epoch)])
        return buf.getvalue()


# -- training --


def batch_loss(params, config, batch, mcc_mode="pooled", training=False, rng=None, with_grad=False):
    probs, cache = forward_batch(params, config, batch.x, training=training, rng=rng)
    loss, dyhat = composite_loss(batch.y, probs[..., 1], batch.label_mask, mcc_mode)
    if not with_grad:
        return loss, None
    dprobs = np.zeros_like(probs)
    dprobs[..., 1] = dyhat
    return loss, backward_batch(params, config, cache, dprobs)


def evaluate_loss(params, config, samples, batch_size=8, mcc_mode="pooled"):
    """Mean composite loss over fixed-order batches, dropout off."""
    losses = []
    for batch in make_batches(samples, batch_size, length_multiple=config.length_multiple, shuffle=False):
        if batch.label_mask.any():
            losses.append(batch_loss(params, config, batch, mcc_mode)[0])
    if not losses:
        raise ValidationError("validation set has no annotated residues")
    return float(np.mean(losses))


def train(config, train_config, train_samples, val_samples, params=None):
    """Train one model and return ``(best_params, history)``.

    Samples must already be standardized (see :func:`prepare_samples`). The
    returned parameters are those of the epoch with the lowest validation loss.
    """
    if not val_samples:
        raise ValidationError("training needs a non-empty validation set")
    if not train_samples:
        raise ValidationError("training set is empty")
    tc = train_config
    if params is None:
        params = init_model(config, tc.seed)
    state = AdamState.zeros_like(params)
    schedule = PlateauSchedule(tc.lr0, tc.lr_decay_factor, tc.plateau_patience, tc.early_stop_patience, tc.min_improvement)
    history = TrainHistory()
    best = params
    for epoch in range(tc.max_epochs):
        lr = schedule.lr
        losses = []
        batches = make_batches(train_samples, tc.batch_size, tc.seed, epoch, config.length_multiple)
        for bi, batch in enumerate(batches):
            if not batch.label_mask.any():
                continue
            rng = np.random.default_rng([tc.seed, epoch, bi])
            loss, grads = batch_loss(params, config, batch, tc.mcc_mode, training=True, rng=rng, with_grad=True)
            params, state = adam_step(params, grads, state, lr, tc.beta1, tc.beta2, tc.eps_adam)
            losses.append(loss)
        val = evaluate_loss(params, config, val_samples, tc.batch_size, tc.mcc_mode)
        history.train_loss.append(float(np.mean(losses)) if losses else float("nan"))
        history.val_loss.append(val)
        history.lr.append(lr)
        improved, stop = schedule.update(val)
        if improved:
            best = params
            history.best_epoch = epoch + 1
        log.info("epoch %d train %.5f val %.5f lr %.2e%s", epoch + 1, history.train_loss[-1], val, lr, " *" if improved else "")
        if stop:
            break
    return best, history


def prepare_samples(config, ids, X, y, sequences=None, standardizer=None):
    """Standardize embeddings and build model inputs."""
    out = []
    for i, (rid, emb, lab) in enumerate(zip(ids, X, y)):
        if standardizer is not None:
            emb = standardizer.transform(np.asarray(emb, dtype=float))
        seq = sequences[i] if sequences is not None else None
        x = build_input(config, emb, sequence=seq)
        lab = np.asarray(lab, dtype=np.int8)
        if lab.shape != (x.shape[0],):
            raise ShapeError(f"{rid}: {lab.size} labels for {x.shape[0]} residues")
        out.append(Sample(rid, x, lab))
    return out


# -- folds --


def _quantile_bins(values, n_bins):
    ranks = rankdata(values, method="average")
    return np.minimum((n_bins * (ranks - 1) / len(values)).astype(int), n_bins - 1)


def stratified_folds(lengths, disorder_ratios, k=10, seed=0, n_bins=4):
    """Assign each record to one of ``k`` folds.

    Records are binned by joint quantiles of length and disorder ratio, each
    bin is shuffled with ``seed``, and the bins are dealt round-robin in one
    continuous pass, so fold sizes differ by at most one.
    """
    lengths = np.asarray(lengths, dtype=float)
    ratios = np.asarray(disorder_ratios, dtype=float)
    n = lengths.size
    if k < 2:
        raise ValidationError("k must be at least 2")
    if k > n:
        raise ValidationError(f"k={k} folds requested for only {n} records")
    key = _quantile_bins(ratios, n_bins) * n_bins + _quantile_bins(lengths, n_bins)
    rng = np.random.default_rng(seed)
    order = []
    for b in range(n_bins * n_bins):
        members = np.flatnonzero(key == b)
        order.extend(rng.permutation(members).tolist())
    folds = np.empty(n, dtype=int)
    offset = int(rng.integers(k))
    for pos, idx in enumerate(order):
        folds[idx] = (pos + offset) % k
    return folds


# -- ensembles --


@dataclass
class PredictionProfile:
    id: str
    sequence: str
    scores: np.ndarray
    classes: np.ndarray


def member_probability(member, emb, mask=None, sequence=None):
    if isinstance(member, Checkpoint):
        config, params, std = member.config, member.params, member.standardizer
    else:
        config, params = member[:2]
        std = member[2] if len(member) > 2 else None
    x = np.asarray(emb, dtype=float)
    if std is not None:
        if x.ndim != 2 or x.shape[1] != std.mean_.shape[0]:
            raise ShapeError(f"channel axis mismatch: embedding has shape {x.shape}, standardizer expects D={std.mean_.shape[0]}")
        x = std.transform(x)
    return forward(params, config, x, mask=mask, sequence=sequence)[:, 1]


def ensemble_predict(models, emb, mask=None, sequence="", target_id=""):
    """Average disorder probabilities of several models; classes use the strict 0.5 rule.

    Per residue the member outputs are summed in sorted order, so the result
    does not depend on the order of ``models``.
    """
    models = list(models)
    if not models:
        raise ValidationError("ensemble needs at least one model")
    probs = np.stack([member_probability(m, emb, mask, sequence or None) for m in models])
    mean = np.sort(probs, axis=0).sum(axis=0) / len(models)
    return PredictionProfile(target_id, sequence, mean, binarize(mean))


def train_fold_member(config, train_config, samples_raw, fold_of, fold, sequences=None):
    """Train the member validated on ``fold``; the standardizer sees only its training folds.

    ``samples_raw`` holds ``(id, embedding, labels)`` triples.
    """
    tr = [i for i, f in enumerate(fold_of) if f != fold]
    va = [i for i, f in enumerate(fold_of) if f == fold]
    std = EmbeddingStandardizer().fit([samples_raw[i][1] for i in tr])

    def build(idx):
        return prepare_samples(
            config,
            [samples_raw[i][0] for i in idx],
            [samples_raw[i][1] for i in idx],
            [samples_raw[i][2] for i in idx],
            [sequences[i] for i in idx] if sequences is not None else None,
            std,
        )

    tc = replace(train_config, seed=train_config.seed * 1000 + fold)
    params, history = train(config, tc, build(tr), build(va))
    return Checkpoint(config, params, std), history
