"""Hand-crafted token features: POS, word shape, gazetteer (and optional
dependency labels), assembled into per-token multi-hot vectors.

Segment order is fixed (POS, shape, gazetteer, dep) and each enabled type
contributes exactly one one-hot segment.  Gazetteer files hold one token per
line with ``#`` comments; the frequency list is ``token<TAB>count`` per line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import OOV_SLOT, Token, Vocabulary

FEATURE_TYPES = ("pos", "shape", "gazetteer", "dep")

GAZ_CLASSES = ("O", "PER", "LOC")
GAZ_INDEX = {c: i for i, c in enumerate(GAZ_CLASSES)}

SHAPE_RUN_CAP = 4
DEFAULT_FREQUENCY_THRESHOLD = 10_000


def word_shape(surface: str) -> str:
    """Character-class abstraction: uppercase->X, lowercase->x, digit->d,
    anything else kept verbatim; runs longer than 4 collapse to 4.
    """
    if not surface:
        raise ValueError("word_shape: empty surface")
    mapped = []
    for ch in surface:
        if ch.isupper():
            mapped.append("X")
        elif ch.islower():
            mapped.append("x")
        elif ch.isdigit():
            mapped.append("d")
        else:
            mapped.append(ch)
    out: list[str] = []
    run = 0
    for ch in mapped:
        if out and out[-1] == ch:
            run += 1
        else:
            run = 1
        if run <= SHAPE_RUN_CAP:
            out.append(ch)
    return "".join(out)


@dataclass(frozen=True)
class Gazetteer:
    person_tokens: frozenset[str]
    location_tokens: frozenset[str]


def gazetteer_lookup(surface: str, gaz: Gazetteer) -> str:
    """PER / LOC / O for a single token; PER wins when a token is on both lists."""
    key = surface.casefold()
    if key in gaz.person_tokens:
        return "PER"
    if key in gaz.location_tokens:
        return "LOC"
    return "O"


def _read_token_list(stream: Iterable[str]) -> set[str]:
    out = set()
    for line in stream:
        entry = line.split("#", 1)[0].strip()
        if entry:
            out.add(entry.casefold())
    return out


def _read_frequencies(stream: Iterable[str]) -> dict[str, int]:
    freqs: dict[str, int] = {}
    for lineno, line in enumerate(stream, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split("\t")
        if len(parts) != 2:
            raise ValueError(f"frequency list line {lineno}: expected token<TAB>count, got {line!r}")
        token, count = parts
        try:
            freqs[token.casefold()] = int(count)
        except ValueError:
            raise ValueError(f"frequency list line {lineno}: non-integer count {count!r}") from None
    return freqs


def compile_gazetteer(
    person_list: Iterable[str],
    location_list: Iterable[str],
    frequency_list: Iterable[str] = (),
    threshold: int = DEFAULT_FREQUENCY_THRESHOLD,
) -> Gazetteer:
    """Case-fold both lists and drop tokens whose reference frequency >= threshold.

    A token present on both lists survives on both; lookup precedence (PER
    over LOC) resolves the conflict.
    """
    freqs = _read_frequencies(frequency_list)

    def keep(tokens: set[str]) -> frozenset[str]:
        return frozenset(t for t in tokens if freqs.get(t, 0) < threshold)

    return Gazetteer(
        person_tokens=keep(_read_token_list(person_list)),
        location_tokens=keep(_read_token_list(location_list)),
    )


def load_gazetteer(person_path, location_path, frequency_path=None, threshold=DEFAULT_FREQUENCY_THRESHOLD) -> Gazetteer:
    with open(person_path, encoding="utf-8") as p, open(location_path, encoding="utf-8") as l:
        if frequency_path is None:
            return compile_gazetteer(p, l, (), threshold)
        with open(frequency_path, encoding="utf-8") as f:
            return compile_gazetteer(p, l, f, threshold)


@dataclass
class FeatureConfig:
    """Which feature types are active; dependency labels are off by default."""

    pos: bool = True
    shape: bool = True
    gazetteer: bool = True
    dep: bool = False
    gazetteer_threshold: int = DEFAULT_FREQUENCY_THRESHOLD

    def enabled_types(self) -> tuple[str, ...]:
        return tuple(t for t in FEATURE_TYPES if getattr(self, t))

    def to_dict(self) -> dict:
        return {t: bool(getattr(self, t)) for t in FEATURE_TYPES} | {
            "gazetteer_threshold": self.gazetteer_threshold
        }


def feature_dims(vocab: Vocabulary, config: FeatureConfig) -> dict[str, int]:
    """Per-type one-hot widths for the enabled features, in canonical order."""
    sizes = {
        "pos": len(vocab.pos2id),
        "shape": len(vocab.shape2id),
        "gazetteer": len(GAZ_CLASSES),
        "dep": len(vocab.dep2id),
    }
    return {t: sizes[t] for t in config.enabled_types()}


@dataclass
class FeatureVector:
    """Ordered one-hot segments plus their concatenation.

    Each segment carries at most a single 1.  POS/shape/dep use their OOV
    slot for unseen values; the gazetteer segment has an explicit O class, so
    it is always exactly one-hot.
    """

    segments: list[tuple[str, np.ndarray]] = field(default_factory=list)

    @property
    def flat(self) -> np.ndarray:
        if not self.segments:
            return np.zeros(0)
        return np.concatenate([seg for _, seg in self.segments])

    def segment(self, feature_type: str) -> np.ndarray:
        for name, seg in self.segments:
            if name == feature_type:
                return seg
        raise KeyError(feature_type)


def _one_hot(size: int, index: int) -> np.ndarray:
    v = np.zeros(size)
    v[index] = 1.0
    return v


def assemble_features(
    token: Token,
    gaz: Gazetteer,
    vocab: Vocabulary,
    config: FeatureConfig,
) -> FeatureVector:
    """Build the multi-hot feature vector for one token.

    Raises if an enabled feature's source column is missing from the token.
    """
    segments: list[tuple[str, np.ndarray]] = []
    for ftype in config.enabled_types():
        if ftype == "pos":
            if token.pos is None:
                raise ValueError(f"feature 'pos' enabled but token {token.surface!r} has no POS column")
            idx = vocab.pos2id.get(token.pos, vocab.pos2id[OOV_SLOT])
            segments.append(("pos", _one_hot(len(vocab.pos2id), idx)))
        elif ftype == "shape":
            shape = word_shape(token.surface)
            idx = vocab.shape2id.get(shape, vocab.shape2id[OOV_SLOT])
            segments.append(("shape", _one_hot(len(vocab.shape2id), idx)))
        elif ftype == "gazetteer":
            idx = GAZ_INDEX[gazetteer_lookup(token.surface, gaz)]
            segments.append(("gazetteer", _one_hot(len(GAZ_CLASSES), idx)))
        elif ftype == "dep":
            if token.dep_label is None:
                raise ValueError(f"feature 'dep' enabled but token {token.surface!r} has no dependency column")
            idx = vocab.dep2id.get(token.dep_label, vocab.dep2id[OOV_SLOT])
            segments.append(("dep", _one_hot(len(vocab.dep2id), idx)))
    return FeatureVector(segments)


def feature_matrices(
    sentence_tokens: Sequence[Token],
    gaz: Gazetteer,
    vocab: Vocabulary,
    config: FeatureConfig,
    dtype=np.float64,
) -> dict[str, np.ndarray]:
    """Per-type (T, dim) 0/1 matrices for a whole sentence."""
    dims = feature_dims(vocab, config)
    mats = {t: np.zeros((len(sentence_tokens), d), dtype=dtype) for t, d in dims.items()}
    for i, tok in enumerate(sentence_tokens):
        fv = assemble_features(tok, gaz, vocab, config)
        for name, seg in fv.segments:
            mats[name][i] = seg
    return mats
