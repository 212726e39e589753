"""Pair loading, vocabulary behavior, and batch assembly."""

import json

import pytest
import torch

from trainer_shim.data import (
    BOS,
    EOS,
    PAD,
    UNK,
    DataError,
    Pair,
    Vocab,
    build_example,
    collate,
    load_pairs,
)


def test_load_pairs_round_trip(truth_path):
    pairs = load_pairs(truth_path)
    assert len(pairs) == 16
    assert all(p.prompt and p.reference for p in pairs)
    assert "Explain this verdict." in pairs[0].prompt


def test_load_pairs_skips_blank_lines(tmp_path):
    path = tmp_path / "gaps.jsonl"
    row = json.dumps({"prompt": "p", "reference": "r"})
    path.write_text(f"{row}\n\n{row}\n", encoding="utf-8")
    assert len(load_pairs(path)) == 2


@pytest.mark.parametrize(
    "line, fragment",
    [
        ("not json", "line 1: malformed JSON"),
        (json.dumps({"prompt": "only"}), "prompt and reference"),
        (json.dumps({"prompt": 3, "reference": "r"}), "prompt and reference"),
        (json.dumps(["list"]), "prompt and reference"),
    ],
)
def test_load_pairs_rejects_bad_rows(tmp_path, line, fragment):
    path = tmp_path / "bad.jsonl"
    path.write_text(line + "\n", encoding="utf-8")
    with pytest.raises(DataError, match=fragment):
        load_pairs(path)


def test_load_pairs_rejects_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    with pytest.raises(DataError, match="no training pairs"):
        load_pairs(path)


def test_vocab_reserves_special_ids():
    vocab = Vocab.build(["alpha beta alpha"], max_size=16)
    assert (PAD, UNK, BOS, EOS) == (0, 1, 2, 3)
    assert vocab.words[:4] == ["<pad>", "<unk>", "<bos>", "<eos>"]
    assert vocab.encode("alpha gamma") == [vocab.index["alpha"], UNK]


def test_vocab_caps_membership_by_frequency():
    text = "common common common rare middling middling"
    vocab = Vocab.build([text], max_size=6)
    assert len(vocab) == 6
    assert "common" in vocab.index and "middling" in vocab.index
    assert "rare" not in vocab.index


def test_vocab_decode_skips_specials():
    vocab = Vocab.build(["hello world"], max_size=8)
    ids = [BOS] + vocab.encode("hello world") + [EOS, PAD]
    assert vocab.decode(ids) == "hello world"


def test_vocab_json_round_trip():
    vocab = Vocab.build(["one two three"], max_size=10)
    clone = Vocab.from_json(vocab.to_json())
    assert clone.words == vocab.words
    assert clone.encode("two") == vocab.encode("two")


def test_build_example_keeps_tail_when_truncating():
    vocab = Vocab.build(["a b c d e f"], max_size=16)
    pair = Pair(prompt="a b c d", reference="e f")
    full = build_example(pair, vocab, max_len=64)
    assert full[0] == BOS and full[-1] == EOS
    trimmed = build_example(pair, vocab, max_len=4)
    assert len(trimmed) == 4
    assert trimmed[-1] == EOS
    assert trimmed[-3:-1] == vocab.encode("e f")


def test_collate_pads_and_masks():
    inputs, targets = collate([[BOS, 5, 6, EOS], [BOS, 7, EOS]])
    assert inputs.shape == targets.shape == (2, 3)
    assert inputs.tolist() == [[BOS, 5, 6], [BOS, 7, PAD]]
    assert targets.tolist() == [[5, 6, EOS], [7, EOS, -100]]
    assert inputs.dtype == targets.dtype == torch.long
