"""Shared fixtures: fabricated prompt/reference pairs and one trained run."""

import json
import random

import pytest

from trainer_shim.data import load_pairs
from trainer_shim.train import TrainConfig, train

_GROUPS = ("import patterns", "section characteristics", "embedded string patterns")


def make_truth_rows(count: int, seed: int = 0) -> list[dict]:
    """Rows shaped like the upstream gen-truth export."""
    rng = random.Random(seed)
    rows = []
    for i in range(count):
        sample_id = f"{i:064x}"
        score = rng.random()
        verdict = "malicious" if score > 0.5 else "benign"
        group = rng.choice(_GROUPS)
        prompt = (
            "<|system|>\nYou summarize malware verdicts for analysts.\n<|end|>\n"
            "<|user|>\n"
            f"Sample: {sample_id}\n"
            f"Classifier score: {score:.6f}\n"
            f"Verdict: {verdict} (low confidence)\n"
            "Most influential feature groups:\n"
            f"- {group}: pushes toward {verdict}, high impact\n"
            "Explain this verdict.\n<|end|>\n<|assistant|>\n"
        )
        reference = (
            f"The file is assessed as {verdict} with low confidence. "
            f"The {group} pushed the assessment toward {verdict} with high impact."
        )
        rows.append(
            {
                "sample_id": sample_id,
                "label": int(score > 0.5),
                "score": score,
                "verdict": verdict,
                "prompt": prompt,
                "reference": reference,
            }
        )
    return rows


def write_truth(path, rows) -> None:
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")


@pytest.fixture(scope="session")
def truth_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "truth.jsonl"
    write_truth(path, make_truth_rows(16))
    return path


@pytest.fixture(scope="session")
def toy_pairs(truth_path):
    return load_pairs(truth_path)


@pytest.fixture(scope="session")
def lora_run(toy_pairs, tmp_path_factory):
    """One rank-16 adapter training run over the 16 fabricated pairs."""
    out_dir = tmp_path_factory.mktemp("artifacts")
    result = train(toy_pairs, TrainConfig(mode="lora", rank=16, seed=0), out_dir)
    return result, out_dir
