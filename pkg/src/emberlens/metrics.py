"""Text similarity metrics for comparing generated explanations to references.

All metrics tokenize with the same rule: lowercase, maximal runs of word
characters (underscore included).  The embedding fallback makes semantic
scoring possible offline; it hashes cyclic character trigrams per token, so
repeating a token's characters scales its vector without rotating it.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from typing import Callable

import numpy as np

from .featurize import hash_token

_WORD = re.compile(r"\w+")

EMBED_DIM = 512
_BLEU_SMOOTHING = 0.1
_BLEU_MAX_ORDER = 4


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens; punctuation separates, underscore does not."""
    return _WORD.findall(text.lower())


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: str, reference: str) -> float:
    """Corpus-style BLEU for a single pair, orders 1 to 4, uniform weights.

    Orders the candidate is too short to form are dropped and the remaining
    weights renormalized; a zero numerator is smoothed to 0.1 instead.
    """
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand:
        return 0.0

    log_sum = 0.0
    used = 0
    for n in range(1, _BLEU_MAX_ORDER + 1):
        cand_counts = _ngrams(cand, n)
        total = sum(cand_counts.values())
        if total == 0:
            continue
        ref_counts = _ngrams(ref, n)
        clipped = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
        numerator = clipped if clipped > 0 else _BLEU_SMOOTHING
        log_sum += math.log(numerator / total)
        used += 1

    if used == 0:
        return 0.0
    geometric_mean = math.exp(log_sum / used)

    c, r = len(cand), len(ref)
    brevity = 1.0 if c >= r else math.exp(1.0 - r / c)
    return brevity * geometric_mean


def _f1(overlap: float, cand_total: float, ref_total: float) -> float:
    if overlap == 0 or cand_total == 0 or ref_total == 0:
        return 0.0
    precision = overlap / cand_total
    recall = overlap / ref_total
    return 2.0 * precision * recall / (precision + recall)


def rouge_n(candidate: str, reference: str, n: int) -> float:
    """F1 over clipped n-gram overlap."""
    if n < 1:
        raise ValueError("n must be at least 1")
    cand_counts = _ngrams(tokenize(candidate), n)
    ref_counts = _ngrams(tokenize(reference), n)
    overlap = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
    return _f1(overlap, sum(cand_counts.values()), sum(ref_counts.values()))


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token in a:
        current = [0]
        for j, other in enumerate(b, start=1):
            if token == other:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l(candidate: str, reference: str) -> float:
    """F1 over the longest common token subsequence."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    return _f1(_lcs_length(cand, ref), len(cand), len(ref))


def fallback_embed(text: str) -> np.ndarray:
    """Deterministic 512-dim embedding from hashed character trigrams.

    Trigrams wrap around each token cyclically, so a token repeated k times
    within itself maps to k times the same raw vector and normalizes to the
    identical embedding.  Empty or tokenless text maps to the zero vector.
    """
    vector = np.zeros(EMBED_DIM, dtype=np.float64)
    for token in tokenize(text):
        n = len(token)
        for i in range(n):
            trigram = token[i] + token[(i + 1) % n] + token[(i + 2) % n]
            index, sign = hash_token(trigram, EMBED_DIM)
            vector[index] += sign
    norm = float(np.linalg.norm(vector))
    if norm > 0:
        vector /= norm
    return vector


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity, 0.0 when either vector is zero, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return max(-1.0, min(1.0, float(np.dot(a, b) / (norm_a * norm_b))))


def semantic(
    candidate: str,
    reference: str,
    embed: Callable[[str], np.ndarray] = fallback_embed,
) -> float:
    """Cosine similarity of the two texts under an embedding function."""
    return cosine(embed(candidate), embed(reference))
