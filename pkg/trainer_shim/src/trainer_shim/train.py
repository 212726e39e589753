"""Toy-scale fine-tuning runs.

Defaults follow the reference training recipe: AdamW with weight decay 0.01,
batch size 1, one epoch, learning rate 5e-5 with gradient accumulation 4 for
adapter runs, and 5e-6 with accumulation 8 plus 5 linear warmup steps for
full-parameter runs.  Runs are capped at 100 pairs; this trainer exists to
exercise the artifact contract, not to reach reference-scale quality.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
from torch import nn

from .data import Pair, Vocab, build_example, collate
from .lora import adapter_param_count, adapter_state, inject
from .model import ModelConfig, build_model, projection_shapes

LOGGER = logging.getLogger("trainer_shim")

MAX_TOY_PAIRS = 100


@dataclass
class TrainConfig:
    mode: str = "lora"
    rank: int = 16
    alpha: float = 32.0
    dropout: float = 0.1
    lr: float = field(default=0.0)  # 0 means per-mode default
    weight_decay: float = 0.01
    batch_size: int = 1
    grad_accum: int = field(default=0)  # 0 means per-mode default
    epochs: int = 1
    warmup_steps: int = 5
    seed: int = 0
    vocab_size: int = 512

    def __post_init__(self):
        if self.mode not in ("lora", "full"):
            raise ValueError(f"mode must be lora or full, got {self.mode!r}")
        if self.mode == "lora" and self.rank < 1:
            raise ValueError("rank must be positive for lora mode")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.lr == 0.0:
            self.lr = 5e-5 if self.mode == "lora" else 5e-6
        if self.lr < 0:
            raise ValueError("lr must be positive")
        if self.grad_accum == 0:
            self.grad_accum = 4 if self.mode == "lora" else 8
        for name in ("batch_size", "grad_accum", "epochs", "vocab_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps cannot be negative")


@dataclass(frozen=True)
class TrainResult:
    mode: str
    steps: int
    initial_loss: float
    final_loss: float
    adapter_params: int
    out_dir: str


def _dataset_loss(model: nn.Module, examples: list[list[int]], batch_size: int) -> float:
    """Token-mean cross entropy over the whole dataset, dropout disabled."""
    model.eval()
    total, tokens = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            inputs, targets = collate(examples[start : start + batch_size])
            logits = model(inputs)
            total += float(
                nn.functional.cross_entropy(
                    logits.view(-1, logits.shape[-1]),
                    targets.view(-1),
                    ignore_index=-100,
                    reduction="sum",
                )
            )
            tokens += int((targets != -100).sum())
    return total / tokens


def train(pairs: list[Pair], cfg: TrainConfig, out_dir: str | Path) -> TrainResult:
    """Fine-tune on prompt/reference pairs and write a servable artifact dir."""
    if not pairs:
        raise ValueError("no training pairs")
    if len(pairs) > MAX_TOY_PAIRS:
        raise ValueError(f"toy trainer caps at {MAX_TOY_PAIRS} pairs, got {len(pairs)}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    texts = [p.prompt for p in pairs] + [p.reference for p in pairs]
    vocab = Vocab.build(texts, cfg.vocab_size)
    model_cfg = ModelConfig(vocab_size=len(vocab))
    model = build_model(model_cfg, cfg.seed)
    base_state = {k: v.clone() for k, v in model.state_dict().items()}
    base_params = sum(v.numel() for v in base_state.values())
    examples = [build_example(p, vocab, model_cfg.max_seq) for p in pairs]

    if cfg.mode == "lora":
        inject(model, cfg.rank, cfg.alpha, cfg.dropout)
    trainable = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.AdamW(trainable, lr=cfg.lr, weight_decay=cfg.weight_decay)
    scheduler = None
    if cfg.mode == "full" and cfg.warmup_steps > 0:
        scheduler = torch.optim.lr_scheduler.LambdaLR(
            optimizer, lambda step: min(1.0, (step + 1) / cfg.warmup_steps)
        )

    initial_loss = _dataset_loss(model, examples, cfg.batch_size)

    torch.manual_seed(cfg.seed + 1)
    step_losses: list[float] = []
    micro_steps = 0
    optimizer.zero_grad()

    def advance():
        optimizer.step()
        if scheduler is not None:
            scheduler.step()
        optimizer.zero_grad()

    for _ in range(cfg.epochs):
        for start in range(0, len(examples), cfg.batch_size):
            inputs, targets = collate(examples[start : start + cfg.batch_size])
            model.train()
            logits = model(inputs)
            loss = nn.functional.cross_entropy(
                logits.view(-1, logits.shape[-1]), targets.view(-1), ignore_index=-100
            )
            (loss / cfg.grad_accum).backward()
            step_losses.append(float(loss.detach()))
            micro_steps += 1
            LOGGER.info("step %d loss %.4f", micro_steps, step_losses[-1])
            if micro_steps % cfg.grad_accum == 0:
                advance()
    if micro_steps % cfg.grad_accum:
        advance()

    final_loss = _dataset_loss(model, examples, cfg.batch_size)

    (out / "vocab.json").write_text(vocab.to_json(), encoding="utf-8")
    (out / "config.json").write_text(
        json.dumps(
            {
                "mode": cfg.mode,
                "rank": cfg.rank,
                "alpha": cfg.alpha,
                "model": model_cfg.to_dict(),
                "train": asdict(cfg),
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    (out / "plan_spec.json").write_text(
        json.dumps(
            {
                "name": "tiny-chat",
                "num_layers": model_cfg.n_layers,
                "base_params": base_params,
                "bytes_per_param": 4,
                "modules": [
                    {"name": name, "in_features": i, "out_features": o}
                    for name, i, o in projection_shapes(model_cfg)
                ],
            },
            indent=2,
        ),
        encoding="utf-8",
    )

    adapter_params = 0
    if cfg.mode == "lora":
        state = adapter_state(model)
        adapter_params = adapter_param_count(state)
        torch.save(base_state, out / "base.pt")
        torch.save(state, out / "adapter.pt")
    else:
        torch.save(model.state_dict(), out / "checkpoint.pt")

    (out / "history.json").write_text(
        json.dumps(
            {
                "initial_loss": initial_loss,
                "final_loss": final_loss,
                "steps": micro_steps,
                "step_losses": step_losses,
            },
            indent=2,
        ),
        encoding="utf-8",
    )

    return TrainResult(
        mode=cfg.mode,
        steps=micro_steps,
        initial_loss=initial_loss,
        final_loss=final_loss,
        adapter_params=adapter_params,
        out_dir=str(out),
    )
