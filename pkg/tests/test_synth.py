"""Synthetic corpus and model fixtures: determinism, shape, separability."""

import numpy as np
import pytest

from emberlens.featurize import vectorize
from emberlens.gbdt import parse_model, predict_score
from emberlens.ingest import Label, RecordStream, parse_record
from emberlens.synth import generate_corpus, train_model, write_corpus


def test_corpus_is_deterministic_and_balanced():
    first = generate_corpus(30, 20, seed=5)
    second = generate_corpus(30, 20, seed=5)
    assert [r.sha256 for r in first] == [r.sha256 for r in second]
    assert sum(1 for r in first if r.label is Label.BENIGN) == 30
    assert sum(1 for r in first if r.label is Label.MALICIOUS) == 20

    other = generate_corpus(30, 20, seed=6)
    assert [r.sha256 for r in first] != [r.sha256 for r in other]


def test_records_survive_serialization(tmp_path, small_records):
    path = tmp_path / "corpus.jsonl"
    write_corpus(path, small_records[:10])
    loaded = list(RecordStream(path))
    assert len(loaded) == 10
    for original, restored in zip(small_records[:10], loaded):
        assert restored == original


def test_records_vectorize_cleanly(small_records):
    for record in small_records:
        values = vectorize(record).values
        assert np.isfinite(values).all()


def test_class_conditional_fields(small_records):
    malicious = [r for r in small_records if r.label is Label.MALICIOUS]
    benign = [r for r in small_records if r.label is Label.BENIGN]

    assert all(r.family for r in malicious)
    assert all(r.family is None for r in benign)

    mean_strings = lambda rs: sum(r.strings_info.num_strings for r in rs) / len(rs)
    assert mean_strings(benign) > 4 * mean_strings(malicious)

    mean_entropy = lambda rs: sum(
        max(s.entropy for s in r.sections) for r in rs if r.sections
    ) / len(rs)
    assert mean_entropy(malicious) > mean_entropy(benign)


def test_trained_model_separates_classes(small_records, small_ensemble):
    benign_scores = []
    malicious_scores = []
    for record in small_records:
        score = predict_score(small_ensemble, vectorize(record))
        (malicious_scores if record.label is Label.MALICIOUS else benign_scores).append(score)
    assert float(np.mean(benign_scores)) < 0.2
    assert float(np.mean(malicious_scores)) > 0.8


def test_model_text_is_deterministic(small_records):
    text_a = train_model(small_records, num_trees=5, max_depth=2, min_leaf=10, seed=3)
    text_b = train_model(small_records, num_trees=5, max_depth=2, min_leaf=10, seed=3)
    assert text_a == text_b
    assert text_a != train_model(small_records, num_trees=5, max_depth=2, min_leaf=10, seed=4)


def test_model_covers_and_prior(small_records):
    text = train_model(small_records, num_trees=6, max_depth=3, min_leaf=10, seed=2)
    ensemble = parse_model(text)
    assert len(ensemble.trees) == 6
    assert ensemble.num_features == 2381

    # Tree zero is the constant class prior; balanced corpus, log-odds 0.
    prior = ensemble.trees[0]
    assert prior.num_leaves == 1
    assert prior.leaf_value[0] == pytest.approx(0.0)
    assert prior.leaf_count[0] == len(small_records)

    for tree in ensemble.trees:
        if tree.num_leaves > 1:
            tree.validate_covers()
            assert tree.cover(tree.root) == len(small_records)


def test_train_model_requires_enough_records(small_records):
    with pytest.raises(ValueError, match="labeled records"):
        train_model(small_records[:10], num_trees=3, min_leaf=20)
