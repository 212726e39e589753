"""Adapter size accounting for low-rank fine-tuning plans.

Every targeted projection gets two factor matrices, (in_features x r) and
(r x out_features), so one injection point adds r * (in + out) trainable
parameters and a layer stack multiplies that by the layer count.  Checkpoint
sizes assume adapters store only those factors at bytes_per_param each,
against a full fine-tune that stores every base parameter.
"""

from __future__ import annotations

import io
import json
from csv import DictReader, DictWriter
from dataclasses import dataclass
from pathlib import Path

_MIB = 1024 * 1024

CSV_COLUMNS = (
    "rank",
    "injection_points",
    "trainable_params",
    "trainable_pct",
    "adapter_bytes",
    "adapter_mib",
    "savings_pct",
)

FULL_ROW_LABEL = "full"


@dataclass(frozen=True)
class ModuleSpec:
    """One projection targeted for adaptation, dimensions per layer."""

    name: str
    in_features: int
    out_features: int

    def __post_init__(self):
        if self.in_features < 1 or self.out_features < 1:
            raise ValueError(f"module {self.name}: dimensions must be positive")


@dataclass(frozen=True)
class BaseModelSpec:
    name: str
    num_layers: int
    base_params: int
    bytes_per_param: int
    modules: tuple[ModuleSpec, ...]

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be positive")
        if self.base_params < 1:
            raise ValueError("base_params must be positive")
        if self.bytes_per_param < 1:
            raise ValueError("bytes_per_param must be positive")
        if not self.modules:
            raise ValueError("at least one module must be targeted")

    @property
    def injection_points(self) -> int:
        return len(self.modules) * self.num_layers

    @property
    def params_per_rank(self) -> int:
        """Trainable parameters added by one unit of rank across all layers."""
        per_layer = sum(m.in_features + m.out_features for m in self.modules)
        return per_layer * self.num_layers

    @property
    def full_bytes(self) -> int:
        return self.base_params * self.bytes_per_param


# 1.1B-parameter decoder: 22 layers, hidden 2048, grouped-query attention
# with 4 of 32 heads for k/v (so 256-wide k/v projections), MLP width 5632.
DEFAULT_SPEC = BaseModelSpec(
    name="tinyllama-1.1b",
    num_layers=22,
    base_params=1_100_048_384,
    bytes_per_param=4,
    modules=(
        ModuleSpec("q_proj", 2048, 2048),
        ModuleSpec("k_proj", 2048, 256),
        ModuleSpec("v_proj", 2048, 256),
        ModuleSpec("o_proj", 2048, 2048),
        ModuleSpec("gate_proj", 2048, 5632),
        ModuleSpec("up_proj", 2048, 5632),
        ModuleSpec("down_proj", 5632, 2048),
    ),
)


def load_spec(path: str | Path) -> BaseModelSpec:
    """Read a base model description from a JSON file."""
    with open(path, encoding="utf-8") as handle:
        raw = json.load(handle)
    try:
        modules = tuple(
            ModuleSpec(m["name"], int(m["in_features"]), int(m["out_features"]))
            for m in raw["modules"]
        )
        return BaseModelSpec(
            name=str(raw["name"]),
            num_layers=int(raw["num_layers"]),
            base_params=int(raw["base_params"]),
            bytes_per_param=int(raw["bytes_per_param"]),
            modules=modules,
        )
    except KeyError as exc:
        raise ValueError(f"model spec is missing key {exc.args[0]!r}") from exc


@dataclass(frozen=True)
class RankPlan:
    rank: int
    injection_points: int
    trainable_params: int
    trainable_pct: float
    adapter_bytes: int
    adapter_mib: float
    savings_pct: float


def plan(spec: BaseModelSpec, rank: int) -> RankPlan:
    """Size one adapter configuration against its base model."""
    if rank < 1:
        raise ValueError("rank must be positive")
    trainable = spec.params_per_rank * rank
    adapter_bytes = trainable * spec.bytes_per_param
    return RankPlan(
        rank=rank,
        injection_points=spec.injection_points,
        trainable_params=trainable,
        trainable_pct=100.0 * trainable / (spec.base_params + trainable),
        adapter_bytes=adapter_bytes,
        adapter_mib=adapter_bytes / _MIB,
        savings_pct=100.0 * (1.0 - adapter_bytes / spec.full_bytes),
    )


def full_plan(spec: BaseModelSpec) -> RankPlan:
    """The full fine-tune baseline expressed in the same row shape."""
    return RankPlan(
        rank=0,
        injection_points=0,
        trainable_params=spec.base_params,
        trainable_pct=100.0,
        adapter_bytes=spec.full_bytes,
        adapter_mib=spec.full_bytes / _MIB,
        savings_pct=0.0,
    )


def plan_table(spec: BaseModelSpec, ranks: list[int]) -> list[RankPlan]:
    """Plans for each rank in the given order, deduplicated, full row last."""
    seen = set()
    plans = []
    for rank in ranks:
        if rank in seen:
            continue
        seen.add(rank)
        plans.append(plan(spec, rank))
    plans.append(full_plan(spec))
    return plans


def _row_label(row: RankPlan) -> str:
    return FULL_ROW_LABEL if row.rank == 0 else str(row.rank)


def to_csv(plans: list[RankPlan]) -> str:
    """CSV text for a plan table; floats keep full precision."""
    buffer = io.StringIO()
    writer = DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in plans:
        writer.writerow(
            {
                "rank": _row_label(row),
                "injection_points": row.injection_points,
                "trainable_params": row.trainable_params,
                "trainable_pct": repr(row.trainable_pct),
                "adapter_bytes": row.adapter_bytes,
                "adapter_mib": repr(row.adapter_mib),
                "savings_pct": repr(row.savings_pct),
            }
        )
    return buffer.getvalue()


def read_csv(text: str) -> list[RankPlan]:
    """Inverse of to_csv, for consumers that only see the artifact."""
    plans = []
    for record in DictReader(io.StringIO(text)):
        label = record["rank"]
        plans.append(
            RankPlan(
                rank=0 if label == FULL_ROW_LABEL else int(label),
                injection_points=int(record["injection_points"]),
                trainable_params=int(record["trainable_params"]),
                trainable_pct=float(record["trainable_pct"]),
                adapter_bytes=int(record["adapter_bytes"]),
                adapter_mib=float(record["adapter_mib"]),
                savings_pct=float(record["savings_pct"]),
            )
        )
    return plans


def format_table(plans: list[RankPlan]) -> str:
    """Human-readable aligned table with sizes rounded for display."""
    headers = ("rank", "points", "trainable", "% of model", "MiB", "savings %")
    rows = [
        (
            _row_label(row),
            str(row.injection_points),
            f"{row.trainable_params:,}",
            f"{row.trainable_pct:.2f}",
            f"{row.adapter_mib:,.2f}",
            f"{row.savings_pct:.2f}",
        )
        for row in plans
    ]
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))]
    lines = [
        "  ".join(h.rjust(w) for h, w in zip(headers, widths)),
        "  ".join("-" * w for w in widths),
    ]
    lines.extend("  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows)
    return "\n".join(lines)
