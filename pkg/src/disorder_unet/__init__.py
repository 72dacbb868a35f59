"""Per-residue intrinsic disorder prediction with a 1D Attention U-Net over
protein language model embeddings."""

__version__ = "0.1.0"

from .checkpoint import Checkpoint, load_checkpoint, load_params, save_params
from .datasets import (
    Dataset,
    EmbeddingMatrix,
    EmbeddingStandardizer,
    SequenceRecord,
    assemble_dataset,
    binarize_chezod,
    fit_standardizer,
    parse_chezod,
    parse_fasta,
    parse_reference,
    read_embedding,
    write_embedding,
)
from .estimator import DisorderUnetClassifier, DisorderUnetEnsemble
from .metrics import ScoredResidues, aggregate, binarize, confusion, f1, mcc_binary, roc_auc
from .objective import bce, composite_loss, soft_mcc
from .trainer import TrainConfig, adam_step, ensemble_predict, make_batches, stratified_folds, train
from .unet import ModelConfig, attention_gate, forward, init_model, param_count
