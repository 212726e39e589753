"""Text metric hand values, identities, ranges, and the embedding fallback."""

import math
import random

import numpy as np
import pytest

from emberlens.metrics import (
    EMBED_DIM,
    bleu,
    cosine,
    fallback_embed,
    rouge_l,
    rouge_n,
    semantic,
    tokenize,
)

REF = "the cat sat on the mat"
CAND = "the cat on the mat"


def test_tokenize():
    assert tokenize("The cat, sat-on the_mat!") == ["the", "cat", "sat", "on", "the_mat"]
    assert tokenize("") == []
    assert tokenize("...!?") == []


def test_identity_scores_one():
    text = "the quick brown fox jumps"
    assert bleu(text, text) == pytest.approx(1.0)
    assert rouge_n(text, text, 1) == pytest.approx(1.0)
    assert rouge_n(text, text, 2) == pytest.approx(1.0)
    assert rouge_l(text, text) == pytest.approx(1.0)
    assert semantic(text, text) == pytest.approx(1.0)


def test_bleu_hand_value_clipping_and_smoothing():
    # cand [the, the, the] vs ref [the, cat]: p1 = 1/3 clipped, p2 and p3
    # smoothed to 0.1/total, order 4 dropped; BP = 1 since c >= r.
    expected = ((1 / 3) * (0.1 / 2) * (0.1 / 1)) ** (1 / 3)
    assert expected == pytest.approx(0.11856311014966878)
    assert bleu("the the the", "the cat") == pytest.approx(expected, rel=1e-12)


def test_bleu_brevity_penalty():
    # Perfect precision, candidate shorter than reference: BP = exp(1 - 3/2).
    assert bleu("the cat", "the cat sat") == pytest.approx(math.exp(-0.5), rel=1e-12)
    assert bleu("the cat", "the cat sat") == pytest.approx(0.6065306597126334)


def test_bleu_edge_cases():
    assert bleu("", "anything at all") == 0.0
    assert bleu("", "") == 0.0
    # Tokenless reference: every numerator smoothed, still a valid score.
    assert 0.0 < bleu("some words here", "") < 1.0


def test_bleu_disjoint_vocabulary_stays_small():
    cand = " ".join(f"w{i}" for i in range(10))
    ref = " ".join(f"v{i}" for i in range(10))
    assert 0.0 < bleu(cand, ref) <= 0.1


def test_rouge_hand_values():
    ten_elevenths = 10.0 / 11.0
    assert rouge_n(CAND, REF, 1) == pytest.approx(ten_elevenths, abs=1e-12)
    assert rouge_l(CAND, REF) == pytest.approx(ten_elevenths, abs=1e-12)
    # Bigrams: overlap 3 of 4 candidate / 5 reference bigrams.
    assert rouge_n(CAND, REF, 2) == pytest.approx(2.0 / 3.0, abs=1e-12)


def test_rouge_edge_cases():
    assert rouge_n("abc def", "ghi jkl", 1) == 0.0
    assert rouge_n("", "abc", 1) == 0.0
    assert rouge_n("abc", "", 1) == 0.0
    assert rouge_l("", "abc") == 0.0
    with pytest.raises(ValueError):
        rouge_n("a", "a", 0)


def test_rouge_l_reversal():
    # All-distinct tokens reversed share an LCS of exactly one token.
    assert rouge_l("d c b a", "a b c d") == pytest.approx(0.25)


def test_fallback_embed_properties():
    vector = fallback_embed("import patterns pushed the assessment")
    assert vector.shape == (EMBED_DIM,)
    assert np.linalg.norm(vector) == pytest.approx(1.0)

    assert np.all(fallback_embed("") == 0.0)
    assert np.all(fallback_embed("?!.") == 0.0)

    # Cyclic trigrams: a token repeated within itself scales the raw vector
    # but normalizes to the same embedding.
    np.testing.assert_allclose(fallback_embed("ab"), fallback_embed("abab"), atol=1e-12)
    assert semantic("ab", "abab") == pytest.approx(1.0)


def test_cosine():
    assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    assert cosine(np.array([1.0, 1.0]), np.array([-1.0, -1.0])) == pytest.approx(-1.0)
    assert cosine(np.zeros(3), np.ones(3)) == 0.0
    assert cosine(np.array([1.0, 2.0]), np.array([2.0, 4.0])) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        cosine(np.zeros(2), np.zeros(3))


def test_semantic_bounds_and_zero_text():
    assert semantic("", "words") == 0.0
    value = semantic("import patterns matter", "export tables matter")
    assert -1.0 <= value <= 1.0


def test_metric_ranges_under_fuzz():
    rng = random.Random(31337)
    vocabulary = ["the", "cat", "sat", "mat", "on", "a", "b", "malicious", "benign", "impact"]
    for _ in range(500):
        cand = " ".join(rng.choice(vocabulary) for _ in range(rng.randrange(0, 12)))
        ref = " ".join(rng.choice(vocabulary) for _ in range(rng.randrange(0, 12)))
        assert 0.0 <= bleu(cand, ref) <= 1.0
        assert 0.0 <= rouge_n(cand, ref, 1) <= 1.0
        assert 0.0 <= rouge_n(cand, ref, 2) <= 1.0
        assert 0.0 <= rouge_l(cand, ref) <= 1.0
        assert -1.0 <= semantic(cand, ref) <= 1.0
