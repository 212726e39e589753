"""Training data plumbing: prompt/reference pairs and a word-level vocabulary.

Pairs come from JSONL files where each row carries at least "prompt" and
"reference" string fields (the shape the upstream gen-truth exporter writes).
The vocabulary is whitespace-tokenized surface forms, capped by frequency,
with four reserved ids for padding, unknowns, and sequence delimiters.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import torch

PAD, UNK, BOS, EOS = 0, 1, 2, 3
_SPECIALS = ("<pad>", "<unk>", "<bos>", "<eos>")


@dataclass(frozen=True)
class Pair:
    prompt: str
    reference: str


class DataError(ValueError):
    """Raised for unreadable or incomplete training rows."""


def load_pairs(path: str | Path) -> list[Pair]:
    pairs = []
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {line_number}: malformed JSON: {exc.msg}") from exc
            if not isinstance(row, dict) or not isinstance(row.get("prompt"), str) \
                    or not isinstance(row.get("reference"), str):
                raise DataError(f"line {line_number}: row needs prompt and reference strings")
            pairs.append(Pair(prompt=row["prompt"], reference=row["reference"]))
    if not pairs:
        raise DataError(f"no training pairs in {path}")
    return pairs


class Vocab:
    """Whitespace word vocabulary with frequency-capped membership."""

    def __init__(self, words: list[str]):
        self.words = list(_SPECIALS) + [w for w in words if w not in _SPECIALS]
        self.index = {word: i for i, word in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    @classmethod
    def build(cls, texts: list[str], max_size: int = 512) -> "Vocab":
        counts = Counter(word for text in texts for word in text.split())
        keep = [word for word, _ in counts.most_common(max(0, max_size - len(_SPECIALS)))]
        return cls(keep)

    def encode(self, text: str) -> list[int]:
        return [self.index.get(word, UNK) for word in text.split()]

    def decode(self, ids: list[int]) -> str:
        return " ".join(self.words[i] for i in ids if i >= len(_SPECIALS))

    def to_json(self) -> str:
        return json.dumps({"words": self.words[len(_SPECIALS):]})

    @classmethod
    def from_json(cls, text: str) -> "Vocab":
        return cls(json.loads(text)["words"])


def build_example(pair: Pair, vocab: Vocab, max_len: int) -> list[int]:
    """Token ids for one training sequence, keeping the tail when too long so
    the reference (the part being learned) survives truncation."""
    ids = [BOS] + vocab.encode(pair.prompt) + vocab.encode(pair.reference) + [EOS]
    return ids[-max_len:]


def collate(examples: list[list[int]]) -> tuple[torch.Tensor, torch.Tensor]:
    """Right-padded (inputs, targets) with pad positions masked out of the loss."""
    width = max(len(ids) for ids in examples) - 1
    inputs = torch.full((len(examples), width), PAD, dtype=torch.long)
    targets = torch.full((len(examples), width), -100, dtype=torch.long)
    for row, ids in enumerate(examples):
        seq = torch.tensor(ids, dtype=torch.long)
        inputs[row, : len(ids) - 1] = seq[:-1]
        targets[row, : len(ids) - 1] = seq[1:]
    return inputs, targets
