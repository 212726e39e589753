"""Low-rank adapter injection for the tiny chat model.

Each adapted linear layer keeps its frozen base weight and adds two trainable
factors shaped (in_features x r) and (r x out_features), scaled by alpha / r.
The down factor starts at random, the up factor at zero, so an injected model
computes exactly what the base model did until training moves the factors.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .model import PROJECTION_NAMES, TinyChatModel


class LoRALinear(nn.Module):
    def __init__(self, base: nn.Linear, rank: int, alpha: float, dropout: float):
        super().__init__()
        if rank < 1:
            raise ValueError("rank must be positive")
        self.base = base
        self.base.weight.requires_grad_(False)
        self.rank = rank
        self.scaling = alpha / rank
        self.dropout = nn.Dropout(dropout)
        in_features = base.in_features
        out_features = base.out_features
        self.lora_a = nn.Parameter(torch.empty(in_features, rank))
        self.lora_b = nn.Parameter(torch.zeros(rank, out_features))
        nn.init.kaiming_uniform_(self.lora_a, a=math.sqrt(5))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        update = (self.dropout(x) @ self.lora_a) @ self.lora_b
        return self.base(x) + update * self.scaling


def inject(model: TinyChatModel, rank: int, alpha: float, dropout: float) -> TinyChatModel:
    """Wrap the seven projections of every layer and freeze everything else."""
    for parameter in model.parameters():
        parameter.requires_grad_(False)
    for layer in model.layers:
        for name in PROJECTION_NAMES:
            owner = layer.self_attn if hasattr(layer.self_attn, name) else layer.mlp
            setattr(owner, name, LoRALinear(getattr(owner, name), rank, alpha, dropout))
    return model


def adapter_state(model: TinyChatModel) -> dict[str, torch.Tensor]:
    """Only the factor tensors, keyed by their qualified parameter names."""
    return {
        name: tensor.detach().clone()
        for name, tensor in model.state_dict().items()
        if "lora_" in name
    }


def adapter_param_count(state: dict[str, torch.Tensor]) -> int:
    return sum(tensor.numel() for tensor in state.values())
