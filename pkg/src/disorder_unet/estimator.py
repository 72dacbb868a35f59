"""scikit-learn compatible wrappers around the network and its training loop.

``X`` is a list of per-sequence embedding matrices ``(L, D)`` and ``y`` a list
of label tracks with ``0``/``1``/``-1`` (unknown). Predictions come back as a
list of per-residue arrays.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .checkpoint import Checkpoint, load_checkpoint, save_params
from .datasets import EmbeddingStandardizer
from .errors import ValidationError
from .metrics import ScoredResidues, binarize, roc_auc
from .trainer import TrainConfig, ensemble_predict, prepare_samples, stratified_folds, train, train_fold_member
from .unet import ModelConfig, forward
from .validation import check_embedding_list, check_label_list, check_sequences


class DisorderUnetClassifier(ClassifierMixin, BaseEstimator):
    """Per-residue disorder classifier backed by the 1D Attention U-Net.

    With no ``validation_data``, ``validation_fraction`` of the sequences is
    held out (seeded by ``random_state``) to drive early stopping.
    """

    def __init__(
        self,
        filters_per_level=(32, 64, 64, 64),
        kernel_len=7,
        up_kernel=2,
        gate_reduction=1,
        dropout_rate=0.25,
        use_onehot_input=False,
        max_len=7168,
        batch_size=8,
        learning_rate=1e-3,
        max_epochs=100,
        early_stop_patience=5,
        plateau_patience=1,
        mcc_mode="pooled",
        standardize=True,
        validation_fraction=0.1,
        random_state=0,
    ):
        self.filters_per_level = filters_per_level
        self.kernel_len = kernel_len
        self.up_kernel = up_kernel
        self.gate_reduction = gate_reduction
        self.dropout_rate = dropout_rate
        self.use_onehot_input = use_onehot_input
        self.max_len = max_len
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.early_stop_patience = early_stop_patience
        self.plateau_patience = plateau_patience
        self.mcc_mode = mcc_mode
        self.standardize = standardize
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _model_config(self, n_features):
        return ModelConfig(
            input_dim=n_features,
            filters_per_level=tuple(self.filters_per_level),
            kernel_len=self.kernel_len,
            dropout_rate=self.dropout_rate,
            use_onehot_input=self.use_onehot_input,
            max_len=self.max_len,
            up_kernel=self.up_kernel,
            gate_reduction=self.gate_reduction,
        )

    def _train_config(self):
        return TrainConfig(
            batch_size=self.batch_size,
            lr0=self.learning_rate,
            max_epochs=self.max_epochs,
            early_stop_patience=self.early_stop_patience,
            plateau_patience=self.plateau_patience,
            mcc_mode=self.mcc_mode,
            seed=self.random_state,
        )

    def fit(self, X, y, sequences=None, validation_data=None):
        """Fit on ``X``/``y``; ``validation_data`` is ``(X_val, y_val[, seq_val])``."""
        X = check_embedding_list(X)
        y = check_label_list(y, X)
        sequences = check_sequences(sequences, X)
        config = self._model_config(X[0].shape[1])
        if validation_data is None:
            if len(X) < 2:
                raise ValidationError("need at least 2 sequences to carve out a validation split")
            rng = np.random.default_rng(self.random_state)
            order = rng.permutation(len(X))
            n_val = max(1, int(round(self.validation_fraction * len(X))))
            va, tr = sorted(order[:n_val]), sorted(order[n_val:])
            Xv, yv = [X[i] for i in va], [y[i] for i in va]
            sv = [sequences[i] for i in va] if sequences else None
            X, y = [X[i] for i in tr], [y[i] for i in tr]
            sequences = [sequences[i] for i in tr] if sequences else None
        else:
            Xv, yv, *rest = validation_data
            Xv = check_embedding_list(Xv, X[0].shape[1])
            yv = check_label_list(yv, Xv)
            sv = check_sequences(rest[0] if rest else None, Xv)
        std = EmbeddingStandardizer().fit(X) if self.standardize else None
        tr_s = prepare_samples(config, [str(i) for i in range(len(X))], X, y, sequences, std)
        va_s = prepare_samples(config, [str(i) for i in range(len(Xv))], Xv, yv, sv, std)
        params, history = train(config, self._train_config(), tr_s, va_s)
        self.config_ = config
        self.params_ = params
        self.standardizer_ = std
        self.history_ = history
        self.n_features_in_ = config.input_dim
        self.classes_ = np.array([0, 1])
        return self

    @property
    def checkpoint_(self):
        check_is_fitted(self, "params_")
        return Checkpoint(self.config_, self.params_, self.standardizer_)

    def predict_proba(self, X, sequences=None):
        """Per-sequence ``(L, 2)`` class-probability arrays."""
        check_is_fitted(self, "params_")
        X = check_embedding_list(X, self.n_features_in_)
        sequences = check_sequences(sequences, X)
        out = []
        for i, x in enumerate(X):
            if self.standardizer_ is not None:
                x = self.standardizer_.transform(x)
            seq = sequences[i] if sequences else None
            out.append(forward(self.params_, self.config_, x, sequence=seq))
        return out

    def decision_function(self, X, sequences=None):
        return [p[:, 1] for p in self.predict_proba(X, sequences)]

    def predict(self, X, sequences=None):
        return [binarize(p) for p in self.decision_function(X, sequences)]

    def score(self, X, y, sample_weight=None):
        """Pooled ROC-AUC over annotated residues."""
        scores = np.concatenate(self.decision_function(X))
        labels = np.concatenate([np.asarray(t, dtype=np.int8) for t in y])
        return roc_auc(ScoredResidues(scores, labels))

    def save(self, path):
        save_params(path, self.config_, self.params_, self.standardizer_)

    @classmethod
    def from_checkpoint(cls, path):
        ckpt = load_checkpoint(path) if not isinstance(path, Checkpoint) else path
        c = ckpt.config
        est = cls(
            filters_per_level=c.filters_per_level,
            kernel_len=c.kernel_len,
            up_kernel=c.up_kernel,
            gate_reduction=c.gate_reduction,
            dropout_rate=c.dropout_rate,
            use_onehot_input=c.use_onehot_input,
            max_len=c.max_len,
            standardize=ckpt.standardizer is not None,
        )
        est.config_, est.params_, est.standardizer_ = c, ckpt.params, ckpt.standardizer
        est.n_features_in_ = c.input_dim
        est.classes_ = np.array([0, 1])
        return est


class DisorderUnetEnsemble(DisorderUnetClassifier):
    """K-fold ensemble: one member per stratified fold, probabilities averaged.

    Each member trains on ``k - 1`` folds (with its own standardizer) and early
    stops on the held-out fold.
    """

    def __init__(self, n_folds=10, **kwargs):
        super().__init__(**kwargs)
        self.n_folds = n_folds

    @classmethod
    def _get_param_names(cls):
        return sorted(set(DisorderUnetClassifier._get_param_names()) | {"n_folds"})

    def fit(self, X, y, sequences=None, folds=None):
        X = check_embedding_list(X)
        y = check_label_list(y, X)
        sequences = check_sequences(sequences, X)
        config = self._model_config(X[0].shape[1])
        if folds is None:
            ratios = [float(np.mean(t[t != -1] == 1)) if (t != -1).any() else 0.0 for t in y]
            folds = stratified_folds([x.shape[0] for x in X], ratios, self.n_folds, self.random_state)
        folds = np.asarray(folds)
        raw = [(str(i), X[i], y[i]) for i in range(len(X))]
        members, histories = [], []
        for fold in sorted(set(folds.tolist())):
            ckpt, hist = train_fold_member(config, self._train_config(), raw, folds, fold, sequences)
            members.append(ckpt)
            histories.append(hist)
        self.config_ = config
        self.members_ = members
        self.histories_ = histories
        self.folds_ = folds
        self.params_ = members[0].params
        self.standardizer_ = members[0].standardizer
        self.n_features_in_ = config.input_dim
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X, sequences=None):
        check_is_fitted(self, "members_")
        X = check_embedding_list(X, self.n_features_in_)
        sequences = check_sequences(sequences, X)
        out = []
        for i, x in enumerate(X):
            seq = sequences[i] if sequences else ""
            p = ensemble_predict(self.members_, x, sequence=seq).scores
            out.append(np.stack([1.0 - p, p], axis=1))
        return out
