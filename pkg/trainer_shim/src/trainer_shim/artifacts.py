"""Loading trained artifact directories and running inference on them."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .data import BOS, EOS, PAD, UNK, Vocab
from .lora import inject
from .model import ModelConfig, TinyChatModel


class ArtifactError(ValueError):
    """Raised when an artifact directory is missing pieces or inconsistent."""


@dataclass
class ServedModel:
    model: TinyChatModel
    vocab: Vocab
    mode: str


def _read(path: Path) -> str:
    if not path.is_file():
        raise ArtifactError(f"missing artifact file: {path}")
    return path.read_text(encoding="utf-8")


def load_artifacts(artifact_dir: str | Path) -> ServedModel:
    base = Path(artifact_dir)
    meta = json.loads(_read(base / "config.json"))
    vocab = Vocab.from_json(_read(base / "vocab.json"))
    model = TinyChatModel(ModelConfig(**meta["model"]))

    if meta["mode"] == "lora":
        model.load_state_dict(torch.load(base / "base.pt", weights_only=True))
        inject(model, meta["rank"], meta["alpha"], dropout=0.0)
        adapter = torch.load(base / "adapter.pt", weights_only=True)
        loaded = model.load_state_dict(adapter, strict=False)
        if loaded.unexpected_keys:
            raise ArtifactError(f"adapter keys not in model: {loaded.unexpected_keys[:3]}")
    elif meta["mode"] == "full":
        model.load_state_dict(torch.load(base / "checkpoint.pt", weights_only=True))
    else:
        raise ArtifactError(f"unknown artifact mode {meta['mode']!r}")

    model.eval()
    return ServedModel(model=model, vocab=vocab, mode=meta["mode"])


def generate(served: ServedModel, prompt: str, max_new: int = 64) -> str:
    """Greedy decoding; always emits at least one real token."""
    model, vocab = served.model, served.vocab
    ids = [BOS] + vocab.encode(prompt)
    window = model.cfg.max_seq
    emitted: list[int] = []
    with torch.no_grad():
        for _ in range(max(1, max_new)):
            context = torch.tensor([(ids + emitted)[-window:]], dtype=torch.long)
            logits = model(context)[0, -1]
            logits[PAD] = logits[UNK] = logits[BOS] = float("-inf")
            if not emitted:
                logits[EOS] = float("-inf")
            token = int(logits.argmax())
            if token == EOS:
                break
            emitted.append(token)
    return vocab.decode(emitted)


def embed_text(served: ServedModel, text: str) -> list[float]:
    """Mean-pooled, L2-normalized token embedding; zeros for empty text."""
    ids = [i for i in served.vocab.encode(text) if i != UNK]
    dim = served.model.cfg.d_model
    if not ids:
        return [0.0] * dim
    with torch.no_grad():
        pooled = served.model.tok_emb.weight[torch.tensor(ids)].mean(dim=0)
        norm = float(pooled.norm())
        if norm > 0.0:
            pooled = pooled / norm
    return [float(v) for v in pooled]
