"""Binary corpus store for variable-length token-embedding sequences.

File format (EMBSQ1, little-endian):
    magic   7 bytes  45 4D 42 53 51 31 00  ("EMBSQ1\\0")
    dim     u32
    count   u64
    then per sequence: len u32, followed by len*dim float32 values,
    token-major (token s occupies entries s*dim .. s*dim+dim-1).

An optional sidecar ``<name>.meta.json`` may carry provenance; it is never
read here and never affects semantics.

Values are stored as 32-bit floats on disk and kept as float32 in memory;
all numerical reductions elsewhere in the package promote to float64.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ArgumentError,
    DataError,
    FormatError,
    IoError,
    TruncationError,
)

MAGIC = b"EMBSQ1\x00"
_HEADER = struct.Struct("<IQ")
_SEQLEN = struct.Struct("<I")


class Label(enum.Enum):
    ID = "ID"
    AUX = "AUX"
    OOD = "OOD"


@dataclass(frozen=True)
class EmbeddingSequence:
    """One sequence of token embeddings, stored as an (S, D) float32 array."""

    tokens: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tokens, dtype=np.float32)
        if t.ndim != 2:
            raise ArgumentError(f"tokens must be 2-d (S, D), got shape {t.shape}")
        if t.shape[0] < 1 or t.shape[1] < 1:
            raise ArgumentError(f"need len >= 1 and dim >= 1, got shape {t.shape}")
        if not np.all(np.isfinite(t)):
            raise DataError("sequence contains non-finite values")
        object.__setattr__(self, "tokens", t)

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    @property
    def length(self) -> int:
        return self.tokens.shape[0]

    def tokens64(self) -> np.ndarray:
        """Tokens promoted to float64 for accumulation."""
        return self.tokens.astype(np.float64)


@dataclass
class Corpus:
    """Ordered collection of sequences sharing one embedding dimension."""

    dim: int
    sequences: list[EmbeddingSequence] = field(default_factory=list)
    label: Label = Label.ID

    def __post_init__(self):
        if self.dim < 1:
            raise ArgumentError(f"dim must be >= 1, got {self.dim}")
        for i, seq in enumerate(self.sequences):
            if seq.dim != self.dim:
                raise ArgumentError(
                    f"sequence {i} has dim {seq.dim}, corpus dim is {self.dim}"
                )

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    @property
    def total_tokens(self) -> int:
        return sum(s.length for s in self.sequences)


def write_corpus(corpus: Corpus, path) -> None:
    """Write a corpus in EMBSQ1 format. load_corpus inverts this bit-exactly."""
    try:
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(_HEADER.pack(corpus.dim, len(corpus.sequences)))
            for seq in corpus.sequences:
                f.write(_SEQLEN.pack(seq.length))
                f.write(seq.tokens.astype("<f4").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_corpus(path, label: Label = Label.ID) -> Corpus:
    """Load and validate an EMBSQ1 file."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    if len(data) < len(MAGIC):
        raise FormatError(f"{path}: file shorter than magic")
    if data[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic {data[:len(MAGIC)]!r}")
    off = len(MAGIC)
    if len(data) < off + _HEADER.size:
        raise TruncationError(f"{path}: truncated header")
    dim, count = _HEADER.unpack_from(data, off)
    off += _HEADER.size
    if dim < 1:
        raise FormatError(f"{path}: header dim {dim} is invalid")

    sequences: list[EmbeddingSequence] = []
    for i in range(count):
        if len(data) < off + _SEQLEN.size:
            raise TruncationError(f"{path}: truncated at sequence {i} length field")
        (slen,) = _SEQLEN.unpack_from(data, off)
        off += _SEQLEN.size
        if slen < 1:
            raise FormatError(f"{path}: sequence {i} has len {slen}")
        nbytes = slen * dim * 4
        if len(data) < off + nbytes:
            raise TruncationError(f"{path}: sequence {i} payload exceeds file size")
        values = np.frombuffer(data, dtype="<f4", count=slen * dim, offset=off)
        off += nbytes
        if not np.all(np.isfinite(values)):
            raise DataError(f"{path}: non-finite value in sequence {i}")
        sequences.append(EmbeddingSequence(values.reshape(slen, dim).copy()))
    return Corpus(dim=dim, sequences=sequences, label=label)


def split(corpus: Corpus, fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """Disjoint random partition; the first part gets floor(fraction*N) sequences.

    Order within each part follows the original corpus order, and the result
    is a deterministic function of (corpus, fraction, seed).
    """
    if not (0.0 < fraction < 1.0):
        raise ArgumentError(f"fraction must be in (0, 1), got {fraction}")
    n = len(corpus)
    if n == 0:
        raise ArgumentError("cannot split an empty corpus")
    n_first = int(np.floor(fraction * n))
    rng = np.random.default_rng(seed)
    chosen = rng.permutation(n)[:n_first]
    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    first = [corpus.sequences[i] for i in range(n) if mask[i]]
    second = [corpus.sequences[i] for i in range(n) if not mask[i]]
    return (
        Corpus(dim=corpus.dim, sequences=first, label=corpus.label),
        Corpus(dim=corpus.dim, sequences=second, label=corpus.label),
    )


class SamplerMode(enum.Enum):
    SHUFFLE_EACH_EPOCH = "shuffle-each-epoch"
    WITH_REPLACEMENT = "with-replacement"


class BatchSampler:
    """Deterministic mini-batch index stream over N items.

    Identical (seed, n, batch_size, mode) yields identical streams. In
    shuffle mode an epoch is one permutation of [0, n) sliced into batches,
    the final partial batch included, so every epoch covers every index.
    """

    def __init__(self, n: int, batch_size: int, seed: int,
                 mode: SamplerMode = SamplerMode.SHUFFLE_EACH_EPOCH):
        if n < 1:
            raise ArgumentError("sampler needs at least one item")
        if batch_size < 1:
            raise ArgumentError("batch_size must be >= 1")
        self.n = n
        self.batch_size = batch_size
        self.seed = seed
        self.mode = mode
        self._rng = np.random.default_rng(seed)
        self._epoch: np.ndarray | None = None
        self._pos = 0

    def next_batch(self) -> np.ndarray:
        if self.mode is SamplerMode.WITH_REPLACEMENT:
            return self._rng.integers(0, self.n, size=min(self.batch_size, self.n))
        if self._epoch is None or self._pos >= self.n:
            self._epoch = self._rng.permutation(self.n)
            self._pos = 0
        batch = self._epoch[self._pos : self._pos + self.batch_size]
        self._pos += self.batch_size
        return batch

    def batches(self, count: int):
        for _ in range(count):
            yield self.next_batch()
