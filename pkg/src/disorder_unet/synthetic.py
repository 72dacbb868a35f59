"""Synthetic disorder data with a planted local signal, for tests and demos."""

from pathlib import Path

import numpy as np

from .datasets import EmbeddingMatrix, SequenceRecord, embedding_path, write_embedding, write_reference
from .unet import AMINO_ACIDS


def planted_records(n, length=64, dim=16, seed=0, min_len=None, signal=1.5, unknown_rate=0.0):
    """Random embeddings where disordered segments carry a shifted pattern.

    Each sequence gets one or two disordered segments; inside them a fixed
    direction (``+signal`` on feature 0, ``-signal`` on feature 1) is added to
    the Gaussian noise. Returns ``(records, embeddings)`` keyed by id.
    """
    rng = np.random.default_rng(seed)
    pattern = np.zeros(dim)
    pattern[0] = signal
    if dim > 1:
        pattern[1] = -signal
    records, embeddings = [], {}
    for i in range(n):
        lo = min_len or length
        size = int(rng.integers(lo, length + 1))
        labels = np.zeros(size, dtype=np.int8)
        for _ in range(int(rng.integers(1, 3))):
            seg = int(rng.integers(max(2, size // 8), max(3, size // 3)))
            start = int(rng.integers(0, size - seg + 1))
            labels[start:start + seg] = 1
        emb = rng.normal(size=(size, dim)) + labels[:, None] * pattern
        if unknown_rate:
            labels[rng.random(size) < unknown_rate] = -1
        seq = "".join(rng.choice(list(AMINO_ACIDS), size=size))
        rid = f"SYN{seed:03d}_{i:04d}"
        records.append(SequenceRecord(rid, seq, labels))
        embeddings[rid] = emb
    return records, embeddings


def write_toy_dataset(directory, n=24, length=48, dim=16, seed=0, min_len=None, unknown_rate=0.0):
    """Write ``references.txt``, ``sequences.fasta`` and ``embeddings/`` under ``directory``."""
    directory = Path(directory)
    emb_dir = directory / "embeddings"
    emb_dir.mkdir(parents=True, exist_ok=True)
    records, embeddings = planted_records(n, length, dim, seed, min_len=min_len, unknown_rate=unknown_rate)
    write_reference(records, directory / "references.txt")
    (directory / "sequences.fasta").write_text("".join(f">{r.id}\n{r.sequence}\n" for r in records))
    for r in records:
        write_embedding(EmbeddingMatrix(r.id, embeddings[r.id]), embedding_path(emb_dir, r.id))
    return records
