"""Vocabulary construction, pretrained word2vec loading, and the embedding
lookup with its backward pass.

The lookup realizes the one-hot matrix product (token-indicator matrix times
the embedding table) as a row gather; the backward pass scatter-adds output
gradients into the touched rows.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, IdOutOfRange, MalformedHeader, TruncatedFile
from .textprep import TAG_SURFACES

PAD = "<pad>"
UNK = "<unk>"

# Fixed id layout: <pad>=0, <unk>=1, then the normalization tags in this
# order. Corpus words follow, most frequent first.
RESERVED = (PAD, UNK) + tuple(
    TAG_SURFACES[k]
    for k in ("URL", "USER", "EMAIL", "PHONE", "DATE", "TIME", "MONEY", "TARGETWORD")
)


@dataclass
class Vocabulary:
    word_to_id: dict[str, int]
    id_to_word: list[str]

    def __len__(self) -> int:
        return len(self.id_to_word)

    @classmethod
    def build(cls, token_sequences) -> "Vocabulary":
        """Assign ids from training-split token sequences (reserved ids first)."""
        counts = Counter()
        for sequence in token_sequences:
            counts.update(sequence)
        id_to_word = list(RESERVED)
        seen = set(RESERVED)
        for word, _ in sorted(counts.items(), key=lambda item: (-item[1], item[0])):
            if word not in seen:
                id_to_word.append(word)
                seen.add(word)
        return cls({w: i for i, w in enumerate(id_to_word)}, id_to_word)

    def encode(self, surfaces) -> list[int]:
        unk = self.word_to_id[UNK]
        return [self.word_to_id.get(s, unk) for s in surfaces]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for idx, word in enumerate(self.id_to_word):
                handle.write(f"{idx}\t{word}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        id_to_word = []
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                line = line.rstrip("\n")
                if not line:
                    continue
                idx_text, word = line.split("\t", 1)
                if int(idx_text) != len(id_to_word):
                    raise MalformedHeader(f"non-contiguous vocabulary id: {line!r}")
                id_to_word.append(word)
        return cls({w: i for i, w in enumerate(id_to_word)}, id_to_word)


@dataclass
class EmbeddingTable:
    """Row-indexed dense vectors; row 0 (<pad>) is all zeros and stays zero."""

    weights: np.ndarray  # (|V|, dim)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def load_word2vec(path, fmt: str = "binary") -> dict[str, np.ndarray]:
    """Parse a word2vec file into word -> float32 vector (first occurrence wins).

    Formats: text = header "count dim", then "word v1 ... vd" per line;
    binary = same ASCII header, then per entry the word bytes terminated by a
    space followed by dim little-endian float32 values.
    """
    if fmt == "binary":
        return _load_word2vec_binary(path)
    if fmt == "text":
        return _load_word2vec_text(path)
    raise ValueError(f"unknown word2vec format: {fmt!r}")


def _parse_header(header: bytes | str):
    parts = header.split()
    if len(parts) != 2:
        raise MalformedHeader(f"expected 'count dim', got {header!r}")
    try:
        count, dim = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise MalformedHeader(f"non-integer header fields: {header!r}") from exc
    if count < 0 or dim <= 0:
        raise MalformedHeader(f"invalid header values: {header!r}")
    return count, dim


def _load_word2vec_binary(path) -> dict[str, np.ndarray]:
    table: dict[str, np.ndarray] = {}
    with open(path, "rb") as handle:
        header = handle.readline()
        if not header:
            raise MalformedHeader("empty file")
        count, dim = _parse_header(header.decode("utf-8", errors="replace"))
        vector_bytes = 4 * dim
        for _ in range(count):
            word_chars = bytearray()
            while True:
                ch = handle.read(1)
                if not ch:
                    raise TruncatedFile(
                        f"file ended after {len(table)} of {count} entries"
                    )
                if ch == b" ":
                    break
                if ch != b"\n":  # some writers put a newline before each word
                    word_chars.extend(ch)
            payload = handle.read(vector_bytes)
            if len(payload) != vector_bytes:
                raise TruncatedFile(
                    f"vector truncated after {len(table)} of {count} entries"
                )
            word = word_chars.decode("utf-8", errors="replace")
            vector = np.frombuffer(payload, dtype="<f4").astype(np.float32)
            table.setdefault(word, vector)
    return table


def _load_word2vec_text(path) -> dict[str, np.ndarray]:
    table: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as handle:
        header = handle.readline()
        if not header.strip():
            raise MalformedHeader("empty file")
        count, dim = _parse_header(header)
        for _ in range(count):
            line = handle.readline()
            if not line:
                raise TruncatedFile(f"file ended after {len(table)} of {count} entries")
            parts = line.rstrip("\n").split(" ")
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise DimensionMismatch(
                    f"entry {word!r} has {len(values)} values, expected {dim}"
                )
            vector = np.array([float(v) for v in values], dtype=np.float32)
            table.setdefault(word, vector)
    return table


def build_embedding(
    vocab: Vocabulary,
    raw_table: dict[str, np.ndarray],
    dim: int,
    seed: int,
    dtype=np.float64,
) -> EmbeddingTable:
    """Assemble the trainable table: pretrained rows where available, seeded
    uniform(-0.05, 0.05) rows for everything else, zeros for <pad>."""
    for word, vector in raw_table.items():
        if len(vector) != dim:
            raise DimensionMismatch(
                f"pretrained vector for {word!r} has length {len(vector)}, expected {dim}"
            )
    rng = np.random.default_rng(seed)
    weights = rng.uniform(-0.05, 0.05, size=(len(vocab), dim)).astype(dtype)
    for idx, word in enumerate(vocab.id_to_word):
        if word in raw_table:
            weights[idx] = np.asarray(raw_table[word], dtype=dtype)
    weights[vocab.word_to_id[PAD]] = 0.0
    return EmbeddingTable(weights=weights)


def embed(ids, table: EmbeddingTable) -> np.ndarray:
    """Gather rows of the table; ids=[] yields a (0, dim) matrix."""
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= table.weights.shape[0]):
        raise IdOutOfRange(
            f"ids must lie in [0, {table.weights.shape[0]}), got {ids.tolist()}"
        )
    return table.weights[ids]


def embed_backward(ids, grad_output: np.ndarray, vocab_size: int) -> np.ndarray:
    """Scatter-add output gradients into embedding rows (repeats accumulate)."""
    ids = np.asarray(ids, dtype=np.intp)
    grad = np.zeros((vocab_size, grad_output.shape[1]), dtype=grad_output.dtype)
    np.add.at(grad, ids, grad_output)
    return grad


def write_word2vec_binary(path, table: dict[str, np.ndarray], dim: int) -> None:
    """Inverse of the binary reader; used to persist embedding fixtures."""
    with open(path, "wb") as handle:
        handle.write(f"{len(table)} {dim}\n".encode("utf-8"))
        for word, vector in table.items():
            handle.write(word.encode("utf-8") + b" ")
            handle.write(struct.pack(f"<{dim}f", *[float(v) for v in vector]))
