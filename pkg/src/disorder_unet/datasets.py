"""Dataset ingestion: FASTA, three-line references, CheZOD tables and the
per-sequence embedding container, plus feature standardization.
"""

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import (
    FormatError,
    LengthMismatchError,
    MagicError,
    MissingEmbeddingError,
    NonFiniteError,
    SequenceTooLongError,
    SizeMismatchError,
    TruncationError,
    ValidationError,
    VersionError,
)
from .metrics import UNKNOWN

log = logging.getLogger(__name__)

ALPHABET = frozenset("ACDEFGHIKLMNPQRSTVWYXBZU")
LABEL_SYMBOLS = {"0": 0, "1": 1, "-": UNKNOWN}
LABEL_CHARS = {0: "0", 1: "1", UNKNOWN: "-"}
CHEZOD_THRESHOLD = 8.0

EMB_MAGIC = b"PLM1"
EMB_VERSION = 1
EMBEDDING_SUFFIX = ".plm"
STD_FLOOR = 1e-8


@dataclass
class SequenceRecord:
    id: str
    sequence: str
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int8)
            if self.labels.shape != (len(self.sequence),):
                raise LengthMismatchError(
                    f"record {self.id}: {len(self.sequence)} residues but {self.labels.size} labels"
                )

    def __len__(self):
        return len(self.sequence)

    @property
    def disorder_ratio(self):
        """Fraction of annotated residues that are disordered (0 if none annotated)."""
        if self.labels is None:
            return 0.0
        known = self.labels != UNKNOWN
        return float(np.mean(self.labels[known] == 1)) if known.any() else 0.0


def _read_lines(path):
    text = Path(path).read_bytes().decode("utf-8")
    # splitlines() would also split on form feeds etc.; stick to LF / CRLF
    return [line.rstrip("\r") for line in text.split("\n")]


def _clean_sequence(raw, path, lineno):
    seq = raw.strip().upper()
    bad = sorted(set(seq) - ALPHABET)
    if bad:
        raise FormatError(f"illegal residue character(s) {''.join(bad)!r}", path, f"line {lineno}")
    return seq


def parse_fasta(path):
    """Parse a FASTA file into sequence-only records, preserving order."""
    records = []
    header = None
    chunks = []
    header_line = 0

    def flush():
        if header is None:
            return
        if not chunks:
            raise FormatError(f"empty sequence for record {header!r}", path, f"line {header_line}")
        records.append(SequenceRecord(header, "".join(chunks)))

    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        if line.startswith(">"):
            flush()
            tokens = line[1:].split()
            if not tokens:
                raise FormatError("header without an id", path, f"line {lineno}")
            header, chunks, header_line = tokens[0], [], lineno
        else:
            if header is None:
                raise FormatError("sequence data before the first header", path, f"line {lineno}")
            chunks.append(_clean_sequence(line, path, lineno))
    flush()
    return records


def parse_reference(path):
    """Parse repeating ``>id`` / sequence / labels records.

    Labels are ``0`` (ordered), ``1`` (disordered) or ``-`` (unknown).
    """
    lines = [(i, l) for i, l in enumerate(_read_lines(path), start=1) if l.strip()]
    if len(lines) % 3:
        last = lines[-1][0] if lines else 0
        raise TruncationError("incomplete reference record (expected 3 lines per record)", path, f"line {last}")
    records = []
    for j in range(0, len(lines), 3):
        (hl, header), (sl, seq), (ll, lab) = lines[j:j + 3]
        if not header.startswith(">") or not header[1:].split():
            raise FormatError("expected '>id' header", path, f"line {hl}")
        rid = header[1:].split()[0]
        seq = _clean_sequence(seq, path, sl)
        lab = lab.strip()
        bad = sorted(set(lab) - set(LABEL_SYMBOLS))
        if bad:
            raise FormatError(f"record {rid}: illegal label symbol(s) {''.join(bad)!r}", path, f"line {ll}")
        if len(lab) != len(seq):
            raise LengthMismatchError(
                f"record {rid}: sequence has {len(seq)} residues, labels have {len(lab)}", path, f"line {ll}"
            )
        records.append(SequenceRecord(rid, seq, np.array([LABEL_SYMBOLS[c] for c in lab], dtype=np.int8)))
    return records


def format_reference(records):
    out = []
    for r in records:
        if r.labels is None:
            raise ValidationError(f"record {r.id} has no labels")
        out.append(f">{r.id}\n{r.sequence}\n{''.join(LABEL_CHARS[int(v)] for v in r.labels)}\n")
    return "".join(out)


def write_reference(records, path):
    Path(path).write_text(format_reference(records), encoding="utf-8")


def disorder_fraction(records):
    """Disordered share of all annotated residues across ``records``."""
    lab = np.concatenate([r.labels for r in records if r.labels is not None])
    known = lab != UNKNOWN
    return float(np.mean(lab[known] == 1))


def binarize_chezod(z):
    """0 (ordered) iff the CheZOD Z-score is strictly above 8, else 1."""
    z = float(z)
    if not math.isfinite(z):
        raise ValidationError(f"CheZOD score must be finite; got {z}")
    return 0 if z > CHEZOD_THRESHOLD else 1


def parse_chezod(path):
    """Read a tab-separated ``id, position, residue, zscore`` table.

    Positions are 1-based; gaps become unknown labels. Returns records with
    binarized labels in first-seen id order.
    """
    rows = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise FormatError(f"expected 4 tab-separated fields, got {len(parts)}", path, f"line {lineno}")
        rid, pos, res, z = (p.strip() for p in parts)
        try:
            z = float(z)
        except ValueError:
            if lineno == 1:
                continue
            raise FormatError(f"non-numeric Z-score {z!r}", path, f"line {lineno}") from None
        try:
            pos = int(pos)
        except ValueError:
            raise FormatError(f"non-integer position {pos!r}", path, f"line {lineno}") from None
        if pos < 1 or len(res) != 1:
            raise FormatError("position must be >= 1 and residue a single letter", path, f"line {lineno}")
        if not math.isfinite(z):
            raise FormatError("non-finite Z-score", path, f"line {lineno}")
        per = rows.setdefault(rid, {})
        if pos in per:
            raise FormatError(f"duplicate position {pos} for {rid}", path, f"line {lineno}")
        per[pos] = (_clean_sequence(res, path, lineno), binarize_chezod(z))
    records = []
    for rid, per in rows.items():
        length = max(per)
        seq = []
        lab = np.full(length, UNKNOWN, dtype=np.int8)
        for i in range(1, length + 1):
            if i in per:
                seq.append(per[i][0])
                lab[i - 1] = per[i][1]
            else:
                seq.append("X")
        records.append(SequenceRecord(rid, "".join(seq), lab))
    return records


# -- embedding container --


@dataclass
class EmbeddingMatrix:
    id: str
    values: np.ndarray

    @property
    def length(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]


def encode_embedding(emb):
    values = np.asarray(emb.values)
    if values.ndim != 2:
        raise ValidationError(f"embedding must be 2D; got shape {values.shape}")
    as32 = values.astype("<f4")
    if not np.isfinite(as32).all():
        raise NonFiniteError(f"embedding {emb.id} has non-finite values")
    ident = emb.id.encode("utf-8")
    header = EMB_MAGIC + struct.pack("<HHII", EMB_VERSION, 0, values.shape[0], values.shape[1])
    return header + struct.pack("<H", len(ident)) + ident + as32.tobytes(order="C")


def write_embedding(emb, path):
    Path(path).write_bytes(encode_embedding(emb))


def decode_embedding(data, path=None):
    if len(data) < 4:
        raise TruncationError("file shorter than magic", path, 0)
    if data[:4] != EMB_MAGIC:
        raise MagicError(f"bad magic {data[:4]!r}, expected {EMB_MAGIC!r}", path, 0)
    if len(data) < 18:
        raise TruncationError("header truncated", path, len(data))
    version, _reserved, length, dim = struct.unpack_from("<HHII", data, 4)
    if version != EMB_VERSION:
        raise VersionError(f"unsupported embedding version {version}", path, 4)
    (nid,) = struct.unpack_from("<H", data, 16)
    start = 18 + nid
    if len(data) < start:
        raise TruncationError("id truncated", path, len(data))
    try:
        ident = data[18:start].decode("utf-8")
    except UnicodeDecodeError:
        raise FormatError("id is not valid UTF-8", path, 18) from None
    expected = length * dim * 4
    payload = len(data) - start
    if payload != expected:
        raise SizeMismatchError(
            f"header declares {length}x{dim} values ({expected} bytes) but payload holds {payload} bytes",
            path,
            start,
        )
    values = np.frombuffer(data, dtype="<f4", offset=start, count=length * dim).reshape(length, dim)
    if not np.isfinite(values).all():
        raise NonFiniteError("embedding contains non-finite values", path, start)
    return EmbeddingMatrix(ident, values.astype(np.float32))


def read_embedding(path):
    return decode_embedding(Path(path).read_bytes(), path)


def embedding_path(directory, rid):
    return Path(directory) / (safe_filename(rid) + EMBEDDING_SUFFIX)


def safe_filename(rid):
    return "".join(c if c.isalnum() or c in "-_.|" else "_" for c in rid).replace("|", "_")


# -- standardization --


class EmbeddingStandardizer(TransformerMixin, BaseEstimator):
    """Per-feature standardization fitted over all residues of the training set.

    ``X`` is a list of ``(L, D)`` arrays (or a single 2D array). Statistics use
    the population convention and are accumulated with Chan's pairwise merge,
    so the fitted values do not depend on record order beyond rounding.
    """

    def __init__(self, floor=STD_FLOOR):
        self.floor = floor

    def fit(self, X, y=None):
        n = 0
        mean = None
        m2 = None
        for block in _iter_blocks(X):
            k = block.shape[0]
            if k == 0:
                continue
            bm = block.mean(axis=0)
            bm2 = ((block - bm) ** 2).sum(axis=0)
            if mean is None:
                n, mean, m2 = k, bm, bm2
                continue
            if block.shape[1] != mean.shape[0]:
                raise ValidationError(f"feature count changed from {mean.shape[0]} to {block.shape[1]}")
            total = n + k
            delta = bm - mean
            mean = mean + delta * (k / total)
            m2 = m2 + bm2 + delta**2 * (n * k / total)
            n = total
        if n < 2:
            raise ValidationError(f"standardizer needs at least 2 training residues; got {n}")
        self.mean_ = mean
        self.scale_ = np.maximum(np.sqrt(m2 / n), self.floor)
        self.n_samples_seen_ = n
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        if isinstance(X, np.ndarray) and X.ndim == 2:
            return self._apply(X)
        return [self._apply(x) for x in X]

    def _apply(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.mean_.shape[0]:
            raise ValidationError(f"expected (L, {self.mean_.shape[0]}) features; got {x.shape}")
        out = (x - self.mean_) / self.scale_
        # floored columns carry only rounding noise from the mean
        out[:, self.scale_ <= self.floor] = 0.0
        return out


def _iter_blocks(X):
    if isinstance(X, np.ndarray) and X.ndim == 2:
        yield X.astype(float)
        return
    for x in X:
        x = x.values if isinstance(x, EmbeddingMatrix) else x
        yield np.asarray(x, dtype=float)


def fit_standardizer(embeddings):
    return EmbeddingStandardizer().fit(embeddings)


# -- dataset assembly --


@dataclass
class Dataset:
    records: list
    embeddings: dict = field(repr=False)

    def __len__(self):
        return len(self.records)

    @property
    def ids(self):
        return [r.id for r in self.records]

    def subset(self, indices):
        recs = [self.records[i] for i in indices]
        return Dataset(recs, {r.id: self.embeddings[r.id] for r in recs})

    def X(self):
        return [self.embeddings[r.id] for r in self.records]

    def y(self):
        return [r.labels for r in self.records]

    def sequences(self):
        return [r.sequence for r in self.records]


def load_records(path):
    """Pick a parser from the file content: 3-line reference, CheZOD table or FASTA."""
    path = Path(path)
    lines = [l for l in _read_lines(path) if l.strip()]
    if lines and not lines[0].startswith(">") and "\t" in lines[0]:
        return parse_chezod(path)
    if len(lines) >= 3 and lines[0].startswith(">") and not lines[1].startswith(">") and (
        len(lines) < 4 or lines[3].startswith(">")
    ) and set(lines[2].strip()) <= set(LABEL_SYMBOLS):
        return parse_reference(path)
    return parse_fasta(path)


def assemble_dataset(sources, embedding_dir, exclusion_ids=None, max_len=None):
    """Merge record sources and attach embeddings by id.

    ``sources`` holds paths or already-parsed record lists. Duplicate ids keep
    the first occurrence. Excluded ids are dropped before embeddings are
    looked up.
    """
    excluded = set(exclusion_ids or ())
    seen = {}
    for src in sources:
        recs = src if isinstance(src, list) else load_records(src)
        for r in recs:
            if r.id in seen:
                log.warning("duplicate id %s ignored (first occurrence wins)", r.id)
                continue
            seen[r.id] = r
    records = [r for r in seen.values() if r.id not in excluded]
    missing = [r.id for r in records if not embedding_path(embedding_dir, r.id).exists()]
    if missing:
        raise MissingEmbeddingError(missing)
    embeddings = {}
    for r in records:
        if max_len is not None and len(r) > max_len:
            raise SequenceTooLongError(f"record {r.id} has {len(r)} residues, limit is {max_len}")
        emb = read_embedding(embedding_path(embedding_dir, r.id))
        if emb.length != len(r):
            raise SizeMismatchError(f"embedding for {r.id} has {emb.length} rows, sequence has {len(r)} residues")
        embeddings[r.id] = emb.values
    return Dataset(records, embeddings)


def read_id_list(path):
    return [l.split()[0] for l in _read_lines(path) if l.strip() and not l.startswith("#")]
