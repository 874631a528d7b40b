import gzip
import math

import numpy as np
import pytest

from crfae.corpus import PAD_WORD, build_vocab, parse_conll
from crfae.embeddings import (
    build_word_matrix,
    init_uniform,
    load_pretrained,
    load_pretrained_file,
    lookup_word,
)

TOY_VECTORS = "alpha 0.1 0.2 0.3 0.4\nbeta -1 0 1 2\ngamma 0.5 0.5 0.5 0.5\n"


class TestLoadPretrained:
    def test_toy_file(self):
        table = load_pretrained(TOY_VECTORS.splitlines(True), expected_dim=4)
        assert len(table) == 3
        for vec in table.values():
            assert vec.shape == (4,)
        np.testing.assert_allclose(table["beta"], [-1, 0, 1, 2])

    def test_empty_stream(self):
        assert load_pretrained([], expected_dim=10) == {}

    def test_dimension_mismatch_reports_line(self):
        with pytest.raises(ValueError, match="line 2"):
            load_pretrained(["a 1 2\n", "b 1 2 3\n"], expected_dim=2)

    def test_non_numeric_component_reports_line(self):
        with pytest.raises(ValueError, match="line 1"):
            load_pretrained(["a one 2\n"], expected_dim=2)

    def test_duplicates_keep_first(self):
        table = load_pretrained(["a 1 1\n", "a 2 2\n"], expected_dim=2)
        np.testing.assert_allclose(table["a"], [1, 1])

    def test_gzip_file(self, tmp_path):
        path = tmp_path / "vectors.txt.gz"
        with gzip.open(path, "wt", encoding="utf-8") as fh:
            fh.write(TOY_VECTORS)
        table = load_pretrained_file(path, expected_dim=4)
        assert set(table) == {"alpha", "beta", "gamma"}


class TestInitUniform:
    def test_bounds_dim_30(self):
        m = init_uniform(200, 30, np.random.default_rng(0))
        bound = math.sqrt(3.0 / 30)
        assert bound == pytest.approx(0.31623, abs=1e-5)
        assert np.all(np.abs(m) <= bound)

    def test_bound_dim_3_is_one(self):
        m = init_uniform(50, 3, np.random.default_rng(1))
        assert np.all(np.abs(m) <= 1.0)
        assert np.max(np.abs(m)) > 0.8  # actually spreads over the range

    def test_deterministic_per_seed(self):
        a = init_uniform(5, 4, np.random.default_rng(7))
        b = init_uniform(5, 4, np.random.default_rng(7))
        np.testing.assert_array_equal(a, b)

    def test_dim_zero_rejected(self):
        with pytest.raises(ValueError):
            init_uniform(5, 0, np.random.default_rng(0))


@pytest.fixture()
def vocab_and_matrix():
    sents = parse_conll("Baghdad NNP B-NP O\nvisited VBD B-VP O\n")
    vocab = build_vocab(sents, ["baghdad", "extra"])
    pretrained = {
        "baghdad": np.array([1.0, 2.0, 3.0]),
        "extra": np.array([4.0, 5.0, 6.0]),
    }
    matrix = build_word_matrix(vocab, pretrained, 3, np.random.default_rng(0))
    return vocab, matrix


class TestLookup:
    def test_exact_match(self, vocab_and_matrix):
        vocab, matrix = vocab_and_matrix
        np.testing.assert_allclose(lookup_word("baghdad", matrix, vocab), [1, 2, 3])

    def test_case_folded_row_for_capitalized_surface(self, vocab_and_matrix):
        # "Baghdad" is a train word with no exact pretrained vector: its row
        # falls back to the case-folded pretrained vector
        vocab, matrix = vocab_and_matrix
        np.testing.assert_allclose(lookup_word("Baghdad", matrix, vocab), [1, 2, 3])

    def test_case_folded_lookup_of_unseen_casing(self, vocab_and_matrix):
        vocab, matrix = vocab_and_matrix
        np.testing.assert_allclose(lookup_word("BAGHDAD", matrix, vocab), [1, 2, 3])

    def test_unseen_word_hits_unk(self, vocab_and_matrix):
        vocab, matrix = vocab_and_matrix
        np.testing.assert_array_equal(lookup_word("zzz", matrix, vocab), matrix[0])

    def test_lookup_total_and_deterministic(self, vocab_and_matrix):
        vocab, matrix = vocab_and_matrix
        for word in ["baghdad", "Baghdad", "qqq", "visited", ""] :
            if not word:
                continue
            a = lookup_word(word, matrix, vocab)
            b = lookup_word(word, matrix, vocab)
            np.testing.assert_array_equal(a, b)

    def test_pad_row_is_zero(self, vocab_and_matrix):
        vocab, matrix = vocab_and_matrix
        np.testing.assert_array_equal(matrix[vocab.word2id[PAD_WORD]], 0.0)

    def test_train_only_word_gets_random_row_in_bounds(self, vocab_and_matrix):
        vocab, matrix = vocab_and_matrix
        row = matrix[vocab.word2id["visited"]]
        assert np.all(np.abs(row) <= 1.0)
        assert np.any(row != 0.0)
