"""The tagger's computation graph: char-CNN word representations, a Bi-LSTM
over [word; char; features], CRF emissions, and per-feature-type auto-encoder
heads reconstructing the hand-crafted features from the hidden states.

Feature flow is one of four wirings: ``none`` (the plain neural CRF
baseline), ``input_only`` (features concatenated into the LSTM input),
``output_only`` (reconstruction heads only, i.e. multi-task learning), and
``both`` (input + reconstruction, the full model).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import crf
from .autodiff import ParamStore, Value, as_value, binary_cross_entropy, concat
from .autodiff import dropout as apply_dropout
from .autodiff import max_over_time, stack, weighted_sum
from .corpus import SentenceRecord, Vocabulary
from .embeddings import glorot_uniform, init_uniform
from .features import FEATURE_TYPES, FeatureConfig, Gazetteer, feature_matrices

FEATURE_MODES = ("none", "input_only", "output_only", "both")


@dataclass
class ModelConfig:
    word_dim: int = 300
    char_dim: int = 30
    char_filters: int = 30
    char_window: int = 3
    lstm_hidden: int = 200  # per direction
    dropout: float = 0.5
    feature_mode: str = "both"
    lambdas: dict[str, float] = field(default_factory=lambda: {t: 1.0 for t in FEATURE_TYPES})
    ae_bias: bool = True

    def __post_init__(self):
        for name in ("word_dim", "char_dim", "char_filters", "char_window", "lstm_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.feature_mode not in FEATURE_MODES:
            raise ValueError(f"feature_mode must be one of {FEATURE_MODES}, got {self.feature_mode!r}")
        for t, lam in self.lambdas.items():
            if t not in FEATURE_TYPES:
                raise ValueError(f"unknown feature type in lambdas: {t!r}")
            if lam < 0:
                raise ValueError(f"lambda for {t!r} must be >= 0, got {lam}")

    def to_dict(self) -> dict:
        return {
            "word_dim": self.word_dim,
            "char_dim": self.char_dim,
            "char_filters": self.char_filters,
            "char_window": self.char_window,
            "lstm_hidden": self.lstm_hidden,
            "dropout": self.dropout,
            "feature_mode": self.feature_mode,
            "lambdas": {t: float(self.lambdas.get(t, 1.0)) for t in FEATURE_TYPES},
            "ae_bias": self.ae_bias,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class EncodedSentence:
    """A sentence resolved against the vocabulary: ids plus feature matrices."""

    surfaces: list[str]
    word_ids: np.ndarray
    char_ids: list[np.ndarray]
    feats: dict[str, np.ndarray]  # type -> (T, dim_t) 0/1 matrix
    gold_ids: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.surfaces)

    @property
    def flat_feats(self) -> np.ndarray:
        if not self.feats:
            return np.zeros((len(self.surfaces), 0))
        return np.concatenate([self.feats[t] for t in FEATURE_TYPES if t in self.feats], axis=1)


def encode_sentence(
    record: SentenceRecord,
    vocab: Vocabulary,
    gaz: Gazetteer,
    feat_config: FeatureConfig,
    dtype=np.float32,
    with_gold: bool = True,
) -> EncodedSentence:
    word_ids = np.array([vocab.word_id(t.surface) for t in record.tokens], dtype=np.intp)
    char_ids = [np.array([vocab.char_id(c) for c in t.surface], dtype=np.intp) for t in record.tokens]
    feats = feature_matrices(record.tokens, gaz, vocab, feat_config, dtype=dtype)
    gold = None
    if with_gold:
        gold = np.array([vocab.label2id[l] for l in record.labels], dtype=np.intp)
    return EncodedSentence(record.surfaces, word_ids, char_ids, feats, gold)


def encode_corpus(records, vocab, gaz, feat_config, dtype=np.float32, with_gold=True) -> list[EncodedSentence]:
    return [encode_sentence(r, vocab, gaz, feat_config, dtype, with_gold) for r in records]


def char_cnn(char_ids: np.ndarray, char_table: Value, w: Value, b: Value, window: int) -> Value:
    """Max-over-time of ReLU(conv) over the word's character embeddings.

    "Same" zero padding guarantees one window even for single-character
    words; the output length equals the filter count.
    """
    k = len(char_ids)
    if k < 1:
        raise ValueError("char_cnn: empty word")
    dim = char_table.shape[1]
    dtype = char_table.dtype
    emb = char_table[np.asarray(char_ids, dtype=np.intp)]
    pad_l = (window - 1) // 2
    pad_r = window // 2
    parts = []
    if pad_l:
        parts.append(as_value(np.zeros((pad_l, dim), dtype=dtype)))
    parts.append(emb)
    if pad_r:
        parts.append(as_value(np.zeros((pad_r, dim), dtype=dtype)))
    padded = concat(parts, axis=0) if len(parts) > 1 else emb
    idx = np.arange(k)[:, None] + np.arange(window)[None, :]
    windows = padded[idx].reshape((k, window * dim))
    conv = windows @ w + b
    return max_over_time(conv.relu())


def lstm_run(
    xs: Sequence[Value],
    w_in: Value,
    w_rec: Value,
    bias: Value,
    hidden: int,
    reverse: bool = False,
) -> list[Value]:
    """One LSTM direction over per-token input vectors; returns h_t in input order."""
    dtype = w_in.dtype
    h = as_value(np.zeros(hidden, dtype=dtype))
    c = as_value(np.zeros(hidden, dtype=dtype))
    outs: list[Value | None] = [None] * len(xs)
    order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    for t in order:
        gates = xs[t] @ w_in + h @ w_rec + bias
        i = gates[0:hidden].sigmoid()
        f = gates[hidden : 2 * hidden].sigmoid()
        o = gates[2 * hidden : 3 * hidden].sigmoid()
        g = gates[3 * hidden : 4 * hidden].tanh()
        c = f * c + i * g
        h = o * c.tanh()
        outs[t] = h
    return outs  # type: ignore[return-value]


def bilstm_encode(
    xs: Sequence[Value],
    fw: tuple[Value, Value, Value],
    bw: tuple[Value, Value, Value],
    hidden: int,
) -> list[Value]:
    """Concatenated forward/backward hidden states, [h_fw; h_bw] per token."""
    dims = {v.shape for v in xs}
    if len(dims) != 1:
        raise ValueError(f"bilstm_encode: token inputs disagree in dim: {sorted(dims)}")
    hs_f = lstm_run(xs, *fw, hidden)
    hs_b = lstm_run(xs, *bw, hidden, reverse=True)
    return [concat([hf, hb]) for hf, hb in zip(hs_f, hs_b)]


class Tagger:
    """Neural CRF tagger with optional feature input and auto-encoder heads."""

    def __init__(
        self,
        config: ModelConfig,
        vocab: Vocabulary,
        feat_dims: dict[str, int],
        word_matrix: np.ndarray | None = None,
        rng: np.random.Generator | None = None,
        dtype=np.float32,
    ):
        self.config = config
        self.vocab = vocab
        self.feat_dims = dict(feat_dims)
        self.dtype = dtype
        self.n_labels = len(vocab.label2id)
        if rng is None:
            rng = np.random.default_rng(0)

        c = config
        self.input_dim = c.word_dim + c.char_filters + (self.feature_width if self.uses_feature_input else 0)

        p = ParamStore()
        p.add("emb.char", init_uniform(len(vocab.char2id), c.char_dim, rng).astype(dtype))
        if word_matrix is None:
            from .corpus import PAD_WORD

            word_matrix = init_uniform(len(vocab.word2id), c.word_dim, rng)
            word_matrix[vocab.word2id[PAD_WORD]] = 0.0
        if word_matrix.shape != (len(vocab.word2id), c.word_dim):
            raise ValueError(f"word matrix shape {word_matrix.shape} != ({len(vocab.word2id)}, {c.word_dim})")
        p.add("emb.word", word_matrix.astype(dtype))
        p.add("cnn.w", glorot_uniform(c.char_window * c.char_dim, c.char_filters, rng).astype(dtype))
        p.add("cnn.b", np.zeros(c.char_filters, dtype=dtype))
        for direction in ("fw", "bw"):
            p.add(f"lstm.{direction}.w_in", glorot_uniform(self.input_dim, 4 * c.lstm_hidden, rng).astype(dtype))
            p.add(f"lstm.{direction}.w_rec", glorot_uniform(c.lstm_hidden, 4 * c.lstm_hidden, rng).astype(dtype))
            p.add(f"lstm.{direction}.bias", np.zeros(4 * c.lstm_hidden, dtype=dtype))
        p.add("emit.w", glorot_uniform(2 * c.lstm_hidden, self.n_labels, rng).astype(dtype))
        p.add("emit.b", np.zeros(self.n_labels, dtype=dtype))
        p.add("crf.trans", np.zeros((self.n_labels + 2, self.n_labels + 2), dtype=dtype))
        for t in self.ae_head_types:
            p.add(f"ae.{t}.w", glorot_uniform(2 * c.lstm_hidden, self.feat_dims[t], rng).astype(dtype))
            if c.ae_bias:
                p.add(f"ae.{t}.b", np.zeros(self.feat_dims[t], dtype=dtype))
        self.params = p

    # -- wiring ------------------------------------------------------------------

    @property
    def uses_feature_input(self) -> bool:
        return self.config.feature_mode in ("input_only", "both")

    @property
    def ae_head_types(self) -> tuple[str, ...]:
        if self.config.feature_mode in ("output_only", "both"):
            return tuple(t for t in FEATURE_TYPES if t in self.feat_dims)
        return ()

    @property
    def feature_width(self) -> int:
        return sum(self.feat_dims.values())

    @property
    def transition_table(self) -> crf.TransitionTable:
        return crf.TransitionTable(self.params["crf.trans"], self.n_labels)

    # -- graph -------------------------------------------------------------------

    def forward(
        self,
        enc: EncodedSentence,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[Value, dict[str, Value]]:
        """Emission scores (T x L) and per-type feature reconstructions."""
        p = self.params
        word_table = p["emb.word"]
        char_table = p["emb.char"]
        flat = enc.flat_feats if self.uses_feature_input else None
        xs = []
        for t in range(len(enc)):
            parts = [
                word_table[int(enc.word_ids[t])],
                char_cnn(enc.char_ids[t], char_table, p["cnn.w"], p["cnn.b"], self.config.char_window),
            ]
            if flat is not None and flat.shape[1]:
                parts.append(as_value(flat[t].astype(self.dtype)))
            xs.append(concat(parts))
        hs = bilstm_encode(
            xs,
            (p["lstm.fw.w_in"], p["lstm.fw.w_rec"], p["lstm.fw.bias"]),
            (p["lstm.bw.w_in"], p["lstm.bw.w_rec"], p["lstm.bw.bias"]),
            self.config.lstm_hidden,
        )
        hidden = stack(hs)  # (T, 2H)
        if train and self.config.dropout > 0.0:
            if rng is None:
                raise ValueError("training forward pass needs an rng for dropout")
            hidden = apply_dropout(hidden, self.config.dropout, rng, train=True)
        emissions = hidden @ p["emit.w"] + p["emit.b"]
        recon: dict[str, Value] = {}
        for t in self.ae_head_types:
            z = hidden @ p[f"ae.{t}.w"]
            if self.config.ae_bias:
                z = z + p[f"ae.{t}.b"]
            recon[t] = z.sigmoid()
        return emissions, recon

    def joint_loss(
        self,
        enc: EncodedSentence,
        train: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[Value, dict[str, float]]:
        """CRF negative log-likelihood plus lambda-weighted reconstruction losses."""
        if enc.gold_ids is None:
            raise ValueError("joint_loss needs gold labels")
        emissions, recon = self.forward(enc, train=train, rng=rng)
        nll = -crf.log_likelihood(emissions, self.transition_table, enc.gold_ids)
        components = {"nll": float(nll.data)}
        terms, weights = [nll], [1.0]
        for t in self.ae_head_types:
            ae = binary_cross_entropy(recon[t], enc.feats[t].astype(self.dtype))
            components[f"ae_{t}"] = float(ae.data)
            terms.append(ae)
            weights.append(float(self.config.lambdas.get(t, 1.0)))
        loss = weighted_sum(terms, weights) if len(terms) > 1 else nll
        components["loss"] = float(loss.data)
        return loss, components

    def predict_ids(self, enc: EncodedSentence) -> list[int]:
        emissions, _ = self.forward(enc, train=False)
        path, _ = crf.viterbi_decode(emissions.data.astype(np.float64), self.transition_table)
        return path

    def predict_labels(self, enc: EncodedSentence) -> list[str]:
        labels = self.vocab.labels
        return [labels[i] for i in self.predict_ids(enc)]
