"""Pretrained word-vector loading and embedding-table initialization.

Pretrained vectors use the common text layout ``word v1 ... v_dim`` (one word
per line, space separated); gzip-compressed files are accepted.  Random rows
are drawn uniformly from [-sqrt(3/dim), +sqrt(3/dim)].
"""

from __future__ import annotations

import gzip
import math
from typing import Iterable

import numpy as np

from .corpus import PAD_WORD, UNK_WORD, Vocabulary


def load_pretrained(stream: Iterable[str], expected_dim: int) -> dict[str, np.ndarray]:
    """Parse a vector file; duplicates keep their first occurrence.

    Dimension mismatches and non-numeric components raise with the 1-based
    line number.
    """
    table: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(stream, start=1):
        parts = line.rstrip("\n").split(" ")
        # tolerate trailing whitespace-only fields
        while parts and parts[-1] == "":
            parts.pop()
        if not parts:
            continue
        word, comps = parts[0], parts[1:]
        if len(comps) != expected_dim:
            raise ValueError(f"line {lineno}: expected {expected_dim} components, got {len(comps)}")
        try:
            vec = np.array([float(c) for c in comps])
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric vector component") from None
        if word not in table:
            table[word] = vec
    return table


def load_pretrained_file(path, expected_dim: int) -> dict[str, np.ndarray]:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt", encoding="utf-8") as fh:
        return load_pretrained(fh, expected_dim)


def init_uniform(rows: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform init in [-sqrt(3/dim), +sqrt(3/dim)]; deterministic per generator state."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    bound = math.sqrt(3.0 / dim)
    return rng.uniform(-bound, bound, size=(rows, dim))


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def build_word_matrix(
    vocab: Vocabulary,
    pretrained: dict[str, np.ndarray],
    dim: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """|vocab| x dim matrix: pretrained rows where available (exact match,
    then case-folded), random elsewhere; PAD row stays all-zero.
    """
    n = len(vocab.word2id)
    matrix = init_uniform(n, dim, rng)
    matrix[vocab.word2id[PAD_WORD]] = 0.0
    for word, wid in vocab.word2id.items():
        if word in (UNK_WORD, PAD_WORD):
            continue
        vec = pretrained.get(word)
        if vec is None:
            vec = pretrained.get(word.lower())
        if vec is not None:
            if vec.shape != (dim,):
                raise ValueError(f"pretrained vector for {word!r} has dim {vec.shape}, expected ({dim},)")
            matrix[wid] = vec
    return matrix


def lookup_word(surface: str, matrix: np.ndarray, vocab: Vocabulary) -> np.ndarray:
    """Total lookup: exact id, else case-folded id, else the UNK row."""
    return matrix[vocab.word_id(surface)]
