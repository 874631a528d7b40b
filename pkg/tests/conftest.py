"""Shared fixtures: a tiny deterministic corpus and model builders."""

import numpy as np
import pytest

from crfae.corpus import build_vocab, convert_corpus_to_iobes, parse_conll
from crfae.features import FeatureConfig, Gazetteer, feature_dims
from crfae.model import ModelConfig, Tagger, encode_corpus

# three sentences, two label classes after IOBES conversion (O, S-PER)
TINY_TEXT = """Anna NNP B-PER
sings VBZ O
. . O

Boris NNP B-PER
visited VBD O
Anna NNP B-PER

the DT O
dog NN O
barks VBZ O
"""

TINY_COLUMNS = ("word", "pos", "ner")

TINY_TEXT_DEP = """Anna NNP nsubj B-PER
sings VBZ ROOT O
. . punct O

Boris NNP nsubj B-PER
visited VBD ROOT O
Anna NNP dobj B-PER
"""

TINY_COLUMNS_DEP = ("word", "pos", "dep", "ner")

TINY_GAZ = Gazetteer(
    person_tokens=frozenset({"anna", "boris"}),
    location_tokens=frozenset({"oslo"}),
)


def tiny_world(
    feature_mode: str = "both",
    dtype=np.float64,
    dropout: float = 0.0,
    dep: bool = False,
    seed: int = 0,
    lambdas: dict | None = None,
):
    """Small double-precision tagger plus its encoded corpus."""
    if dep:
        sents = convert_corpus_to_iobes(parse_conll(TINY_TEXT_DEP, columns=TINY_COLUMNS_DEP))
        feat_cfg = FeatureConfig(dep=True)
    else:
        sents = convert_corpus_to_iobes(parse_conll(TINY_TEXT, columns=TINY_COLUMNS))
        feat_cfg = FeatureConfig()
    vocab = build_vocab(sents)
    kwargs = {} if lambdas is None else {"lambdas": lambdas}
    config = ModelConfig(
        word_dim=8,
        char_dim=4,
        char_filters=5,
        char_window=3,
        lstm_hidden=6,
        dropout=dropout,
        feature_mode=feature_mode,
        **kwargs,
    )
    model = Tagger(
        config,
        vocab,
        feature_dims(vocab, feat_cfg),
        rng=np.random.default_rng(seed),
        dtype=dtype,
    )
    encoded = encode_corpus(sents, vocab, TINY_GAZ, feat_cfg, dtype=dtype)
    return model, encoded, vocab, feat_cfg


@pytest.fixture()
def tiny_both():
    return tiny_world("both")
