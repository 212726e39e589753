"""End-to-end evaluation: score, explain, narrate, measure, and report.

A run takes a JSONL corpus and a model file, selects the seeded splits,
builds an explanation prompt per evaluated sample, asks each configured
text model for a candidate explanation, and scores the candidates against
the deterministic reference with the overlap and semantic metrics.  Report
artifacts are written with full-precision floats and fixed ordering, so a
mock-provider run is byte-for-byte reproducible.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from csv import DictWriter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

from . import grouping, loraplan, metrics
from .featurize import vectorize
from .gateway import HttpProvider, MockProvider, Provider
from .gbdt import Ensemble, parse_model, predict_score
from .ingest import CorpusSplit, PESampleRecord, load_dataset, select_corpus
from .narrative import build_prompt, build_reference, render_chat, verdict
from .treeshap import explain

REPORT_RANKS = [16, 96, 256, 512, 896]

PER_SAMPLE_COLUMNS = (
    "model_id",
    "sample_id",
    "label",
    "score",
    "verdict",
    "bleu",
    "rouge1",
    "rouge2",
    "rougel",
    "semantic",
    "excluded",
)

_METRIC_NAMES = ("bleu", "rouge1", "rouge2", "rougel", "semantic")


class ConfigError(ValueError):
    def __init__(self, message: str, missing: list[str] | None = None):
        super().__init__(message)
        self.missing = missing or []


@dataclass
class ModelUnderTest:
    model_id: str
    # Token-drop rate applied by the mock provider; ignored over HTTP.
    degradation: float = 0.0


@dataclass
class EvalConfig:
    corpus: str
    model: str
    output_dir: str
    models: list[ModelUnderTest]
    seed: int = 0
    scope: str = "test"
    provider: str = "mock"
    base_url: str = ""
    api_key_env: str = ""
    embedding_model: str = ""
    temperature: float = 0.0
    max_tokens: int = 512
    concurrency: int = 4
    k_groups: int = 5

    def __post_init__(self):
        if self.scope not in ("train", "test", "focus"):
            raise ConfigError(f"scope must be train, test, or focus, got {self.scope!r}")
        if self.provider not in ("mock", "http"):
            raise ConfigError(f"provider must be mock or http, got {self.provider!r}")
        if self.provider == "http" and not self.base_url:
            raise ConfigError("http provider requires base_url", missing=["base_url"])
        if not self.models:
            raise ConfigError("at least one model must be configured", missing=["models"])

    def echo(self) -> dict[str, Any]:
        """Config as written to summary.json."""
        data = asdict(self)
        data["models"] = [asdict(m) for m in self.models]
        return data


_REQUIRED_KEYS = ("corpus", "model", "output_dir", "models")
_OPTIONAL_KEYS = (
    "seed",
    "scope",
    "provider",
    "base_url",
    "api_key_env",
    "embedding_model",
    "temperature",
    "max_tokens",
    "concurrency",
    "k_groups",
)


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> EvalConfig:
    """Read a JSON config file, apply overrides, and validate.

    All missing required keys are reported together by name.
    """
    with open(path, encoding="utf-8") as handle:
        raw = json.load(handle)
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})

    unknown = sorted(set(raw) - set(_REQUIRED_KEYS) - set(_OPTIONAL_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    missing = sorted(k for k in _REQUIRED_KEYS if k not in raw)
    if missing:
        raise ConfigError(f"missing config keys: {', '.join(missing)}", missing=missing)

    models_raw = raw["models"]
    if not isinstance(models_raw, list):
        raise ConfigError("models must be a list")
    models = []
    for i, entry in enumerate(models_raw):
        if isinstance(entry, str):
            models.append(ModelUnderTest(model_id=entry))
        elif isinstance(entry, dict) and "model_id" in entry:
            models.append(
                ModelUnderTest(
                    model_id=str(entry["model_id"]),
                    degradation=float(entry.get("degradation", 0.0)),
                )
            )
        else:
            raise ConfigError(f"models[{i}] needs a model_id")

    kwargs = {k: raw[k] for k in _OPTIONAL_KEYS if k in raw}
    return EvalConfig(
        corpus=str(raw["corpus"]),
        model=str(raw["model"]),
        output_dir=str(raw["output_dir"]),
        models=models,
        **kwargs,
    )


def build_provider(config: EvalConfig) -> Provider:
    if config.provider == "mock":
        rates = {m.model_id: m.degradation for m in config.models}
        return MockProvider(seed=config.seed, degradation=rates)
    return HttpProvider(
        base_url=config.base_url,
        api_key_env=config.api_key_env,
        concurrency=config.concurrency,
    )


@dataclass
class SampleSummary:
    """Model-independent per-sample work: score, groups, prompt, reference."""

    sample_id: str
    label: int
    score: float
    shares: list[grouping.GroupShare]
    prompt: list
    reference: str


@dataclass
class SampleResult:
    model_id: str
    sample_id: str
    label: int
    score: float
    verdict: str
    candidate: str
    reference: str
    bleu: float
    rouge1: float
    rouge2: float
    rougel: float
    semantic: float
    excluded: bool


def load_corpus_and_split(config: EvalConfig) -> tuple[dict[str, PESampleRecord], CorpusSplit]:
    records = list(load_dataset(config.corpus))
    split = select_corpus(records, config.seed)
    return {r.sha256: r for r in records}, split


def summarize_sample(
    record: PESampleRecord, ensemble: Ensemble, k_groups: int = 5
) -> SampleSummary:
    """Score and explain one record and prepare its prompt and reference."""
    vector = vectorize(record)
    score = predict_score(ensemble, vector)
    shares = grouping.aggregate(explain(ensemble, vector))
    return SampleSummary(
        sample_id=record.sha256,
        label=record.label.to_raw(),
        score=score,
        shares=shares,
        prompt=build_prompt(record.sha256, score, shares, k=k_groups),
        reference=build_reference(score, shares, k=k_groups),
    )


def _semantic_score(
    provider: Provider, config: EvalConfig, candidate: str, reference: str
) -> float:
    if config.provider == "http" and not config.embedding_model:
        return metrics.semantic(candidate, reference)
    vectors = provider.embed(config.embedding_model or "offline-trigram", [candidate, reference])
    return metrics.cosine(vectors[0], vectors[1])


def _evaluate_one(
    provider: Provider, config: EvalConfig, model_id: str, summary: SampleSummary
) -> SampleResult:
    candidate = provider.complete(
        model_id,
        summary.prompt,
        temperature=config.temperature,
        max_tokens=config.max_tokens,
    )
    excluded = candidate.strip() == ""
    if excluded:
        scores = {name: 0.0 for name in _METRIC_NAMES}
    else:
        scores = {
            "bleu": metrics.bleu(candidate, summary.reference),
            "rouge1": metrics.rouge_n(candidate, summary.reference, 1),
            "rouge2": metrics.rouge_n(candidate, summary.reference, 2),
            "rougel": metrics.rouge_l(candidate, summary.reference),
            "semantic": _semantic_score(provider, config, candidate, summary.reference),
        }
    return SampleResult(
        model_id=model_id,
        sample_id=summary.sample_id,
        label=summary.label,
        score=summary.score,
        verdict=verdict(summary.score),
        candidate=candidate,
        reference=summary.reference,
        excluded=excluded,
        **scores,
    )


def run_eval(config: EvalConfig, provider: Provider | None = None) -> list[SampleResult]:
    """Evaluate every configured model on the configured split.

    Results come back sorted by (model_id, sample_id) regardless of request
    scheduling, so downstream artifacts are order-stable.
    """
    provider = provider or build_provider(config)
    by_id, split = load_corpus_and_split(config)
    ensemble = parse_model(Path(config.model).read_text(encoding="utf-8"))

    sample_ids = getattr(split, config.scope)
    summaries = [
        summarize_sample(by_id[sample_id], ensemble, config.k_groups)
        for sample_id in sample_ids
    ]

    jobs = [(m.model_id, summary) for m in config.models for summary in summaries]
    if config.provider == "http" and config.concurrency > 1:
        with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
            results = list(
                pool.map(lambda job: _evaluate_one(provider, config, *job), jobs)
            )
    else:
        results = [_evaluate_one(provider, config, model_id, s) for model_id, s in jobs]

    results.sort(key=lambda r: (r.model_id, r.sample_id))
    return results


def summarize_results(results: list[SampleResult]) -> dict[str, Any]:
    """Per-model metric means over included rows, in ascending sample order."""
    per_model: dict[str, Any] = {}
    model_ids = sorted({r.model_id for r in results})
    for model_id in model_ids:
        rows = sorted(
            (r for r in results if r.model_id == model_id), key=lambda r: r.sample_id
        )
        included = [r for r in rows if not r.excluded]
        means = {}
        for name in _METRIC_NAMES:
            total = 0.0
            for row in included:
                total += getattr(row, name)
            means[f"mean_{name}"] = total / len(included) if included else 0.0
        per_model[model_id] = {
            "samples": len(rows),
            "excluded": len(rows) - len(included),
            **means,
        }
    return per_model


def _csv_cell(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return int(value)
    return value


def emit_report(results: list[SampleResult], config: EvalConfig) -> list[Path]:
    """Write per_sample.csv, summary.json, plotdata.json, and lora_plan.csv."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    rows = sorted(results, key=lambda r: (r.model_id, r.sample_id))
    per_sample = out / "per_sample.csv"
    with open(per_sample, "w", encoding="utf-8", newline="") as handle:
        writer = DictWriter(handle, fieldnames=PER_SAMPLE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            record = {k: _csv_cell(getattr(row, k)) for k in PER_SAMPLE_COLUMNS}
            writer.writerow(record)
    written.append(per_sample)

    summary = {
        "config": config.echo(),
        "models": summarize_results(results),
    }
    summary_path = out / "summary.json"
    summary_path.write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    written.append(summary_path)

    model_ids = sorted({r.model_id for r in results})
    per_model = summarize_results(results)
    plotdata = {
        "models": model_ids,
        "metrics": {
            name: [per_model[m][f"mean_{name}"] for m in model_ids]
            for name in _METRIC_NAMES
        },
    }
    plot_path = out / "plotdata.json"
    plot_path.write_text(
        json.dumps(plotdata, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    written.append(plot_path)

    plans = loraplan.plan_table(loraplan.DEFAULT_SPEC, REPORT_RANKS)
    lora_path = out / "lora_plan.csv"
    lora_path.write_text(loraplan.to_csv(plans), encoding="utf-8")
    written.append(lora_path)

    return written


def gen_truth(
    config: EvalConfig, scope: str | None = None
) -> list[dict[str, Any]]:
    """Prompt/reference pairs for the given split, for fine-tuning or audit.

    Each row carries the rendered generation prompt (open assistant turn),
    the reference explanation, and the scoring context.
    """
    by_id, split = load_corpus_and_split(config)
    ensemble = parse_model(Path(config.model).read_text(encoding="utf-8"))
    rows = []
    for sample_id in getattr(split, scope or config.scope):
        summary = summarize_sample(by_id[sample_id], ensemble, config.k_groups)
        rows.append(
            {
                "sample_id": summary.sample_id,
                "label": summary.label,
                "score": summary.score,
                "verdict": verdict(summary.score),
                "prompt": render_chat(summary.prompt),
                "reference": summary.reference,
            }
        )
    return rows
