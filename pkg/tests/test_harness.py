"""Evaluation harness: config handling, runs, summaries, and report artifacts."""

import json

import pytest

from emberlens.gateway import HttpProvider, MockProvider
from emberlens.gbdt import parse_model
from emberlens.harness import (
    PER_SAMPLE_COLUMNS,
    ConfigError,
    EvalConfig,
    ModelUnderTest,
    SampleResult,
    build_provider,
    emit_report,
    gen_truth,
    load_config,
    run_eval,
    summarize_results,
    summarize_sample,
)
from emberlens.narrative import parse_chat


def make_config(demo_paths, tmp_path, **kwargs):
    defaults = dict(
        corpus=str(demo_paths / "corpus.jsonl"),
        model=str(demo_paths / "model.txt"),
        output_dir=str(tmp_path / "out"),
        models=[ModelUnderTest("reference"), ModelUnderTest("lossy", degradation=0.5)],
        scope="focus",
        seed=0,
    )
    defaults.update(kwargs)
    return EvalConfig(**defaults)


def test_config_validation():
    base = dict(corpus="c", model="m", output_dir="o", models=[ModelUnderTest("x")])
    with pytest.raises(ConfigError, match="scope"):
        EvalConfig(**base, scope="everything")
    with pytest.raises(ConfigError, match="provider"):
        EvalConfig(**base, provider="carrier-pigeon")
    with pytest.raises(ConfigError, match="base_url"):
        EvalConfig(**base, provider="http")
    with pytest.raises(ConfigError, match="model"):
        EvalConfig(corpus="c", model="m", output_dir="o", models=[])


def test_load_config_round_trip(tmp_path):
    payload = {
        "corpus": "corpus.jsonl",
        "model": "model.txt",
        "output_dir": "out",
        "models": ["clean", {"model_id": "noisy", "degradation": 0.25}],
        "seed": 9,
        "scope": "focus",
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload), encoding="utf-8")

    config = load_config(path)
    assert config.seed == 9
    assert config.scope == "focus"
    assert config.models == [
        ModelUnderTest("clean", 0.0),
        ModelUnderTest("noisy", 0.25),
    ]

    # Overrides replace file values; None overrides are ignored.
    config = load_config(path, {"seed": 11, "scope": None})
    assert config.seed == 11 and config.scope == "focus"


def test_load_config_reports_all_missing_keys(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"corpus": "c"}), encoding="utf-8")
    with pytest.raises(ConfigError) as exc_info:
        load_config(path)
    assert exc_info.value.missing == ["model", "models", "output_dir"]


def test_load_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "config.json"
    payload = {"corpus": "c", "model": "m", "output_dir": "o", "models": ["x"], "typo": 1}
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(ConfigError, match="typo"):
        load_config(path)


def test_load_config_rejects_bad_model_entries(tmp_path):
    path = tmp_path / "config.json"
    payload = {"corpus": "c", "model": "m", "output_dir": "o", "models": [{"nope": 1}]}
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(ConfigError, match=r"models\[0\]"):
        load_config(path)


def test_config_echo_is_json_ready():
    config = EvalConfig(
        corpus="c", model="m", output_dir="o", models=[ModelUnderTest("x", 0.1)]
    )
    echoed = config.echo()
    assert echoed["models"] == [{"model_id": "x", "degradation": 0.1}]
    json.dumps(echoed)


def test_build_provider_selection():
    config = EvalConfig(
        corpus="c", model="m", output_dir="o",
        models=[ModelUnderTest("x", 0.3)], seed=5,
    )
    provider = build_provider(config)
    assert isinstance(provider, MockProvider)
    assert provider.seed == 5
    assert provider.degradation == {"x": 0.3}

    config = EvalConfig(
        corpus="c", model="m", output_dir="o", models=[ModelUnderTest("x")],
        provider="http", base_url="http://gw.test/v1",
    )
    assert isinstance(build_provider(config), HttpProvider)


def test_summarize_sample(small_records, small_ensemble):
    record = small_records[0]
    summary = summarize_sample(record, small_ensemble, k_groups=5)
    assert summary.sample_id == record.sha256
    assert 0.0 < summary.score < 1.0
    assert len(summary.shares) == 9
    assert summary.prompt[0].role == "system"
    assert record.sha256 in summary.prompt[1].content
    assert summary.reference.startswith("The file is assessed as")


def test_run_eval_clean_model_scores_one(demo_paths, tmp_path):
    config = make_config(demo_paths, tmp_path, models=[ModelUnderTest("reference")])
    results = run_eval(config)
    assert len(results) == 5  # focus split
    for result in results:
        assert result.candidate == result.reference
        assert result.bleu == pytest.approx(1.0)
        assert result.rouge1 == pytest.approx(1.0)
        assert result.rouge2 == pytest.approx(1.0)
        assert result.rougel == pytest.approx(1.0)
        assert result.semantic == pytest.approx(1.0)
        assert not result.excluded


def test_run_eval_is_deterministic_and_sorted(demo_paths, tmp_path):
    config = make_config(demo_paths, tmp_path)
    first = run_eval(config)
    second = run_eval(config)
    assert first == second
    keys = [(r.model_id, r.sample_id) for r in first]
    assert keys == sorted(keys)
    assert len(first) == 10  # 2 models x 5 focus samples


def test_run_eval_degradation_lowers_means(demo_paths, tmp_path):
    config = make_config(demo_paths, tmp_path)
    per_model = summarize_results(run_eval(config))
    assert per_model["reference"]["mean_rouge1"] == pytest.approx(1.0)
    assert per_model["lossy"]["mean_rouge1"] < per_model["reference"]["mean_rouge1"]


def test_focus_split_label_mix(demo_paths, tmp_path):
    config = make_config(demo_paths, tmp_path, models=[ModelUnderTest("reference")])
    results = run_eval(config)
    labels = sorted(r.label for r in results)
    assert labels == [0, 0, 1, 1, 1]  # 2 benign, 3 malicious


def row(model_id, sample_id, value, excluded=False):
    return SampleResult(
        model_id=model_id, sample_id=sample_id, label=1, score=0.9,
        verdict="malicious", candidate="c", reference="r",
        bleu=value, rouge1=value, rouge2=value, rougel=value, semantic=value,
        excluded=excluded,
    )


def test_summarize_results_exclusion_accounting():
    results = [
        row("m", "a", 0.5),
        row("m", "b", 1.0),
        row("m", "c", 123.0, excluded=True),
        row("empty", "a", 7.0, excluded=True),
    ]
    per_model = summarize_results(results)
    assert per_model["m"]["samples"] == 3
    assert per_model["m"]["excluded"] == 1
    assert per_model["m"]["mean_rouge1"] == pytest.approx(0.75)
    assert per_model["empty"]["mean_bleu"] == 0.0
    assert per_model["empty"]["excluded"] == 1


def test_emit_report_artifacts_are_stable(demo_paths, tmp_path):
    config = make_config(demo_paths, tmp_path)
    results = run_eval(config)

    written = emit_report(results, config)
    names = [path.name for path in written]
    assert names == ["per_sample.csv", "summary.json", "plotdata.json", "lora_plan.csv"]

    first = {path.name: path.read_bytes() for path in written}
    second = {path.name: path.read_bytes() for path in emit_report(run_eval(config), config)}
    assert first == second

    csv_lines = first["per_sample.csv"].decode().strip().split("\n")
    assert csv_lines[0] == ",".join(PER_SAMPLE_COLUMNS)
    assert len(csv_lines) == 1 + len(results)

    summary = json.loads(first["summary.json"])
    assert summary["config"]["seed"] == 0
    assert set(summary["models"]) == {"reference", "lossy"}

    plotdata = json.loads(first["plotdata.json"])
    assert plotdata["models"] == ["lossy", "reference"]
    assert set(plotdata["metrics"]) == {"bleu", "rouge1", "rouge2", "rougel", "semantic"}
    assert all(len(v) == 2 for v in plotdata["metrics"].values())

    lora_lines = first["lora_plan.csv"].decode().strip().split("\n")
    assert lora_lines[0].startswith("rank,")
    assert len(lora_lines) == 1 + 6  # five ranks plus the full row


def test_gen_truth_rows(demo_paths, tmp_path):
    config = make_config(demo_paths, tmp_path, models=[ModelUnderTest("reference")])
    rows = gen_truth(config, scope="focus")
    assert len(rows) == 5
    ensemble = parse_model((demo_paths / "model.txt").read_text(encoding="utf-8"))
    assert ensemble.num_features == 2381

    for entry in rows:
        assert set(entry) == {"sample_id", "label", "score", "verdict", "prompt", "reference"}
        assert entry["verdict"] == ("malicious" if entry["score"] > 0.5 else "benign")
        messages = parse_chat(entry["prompt"])
        assert [m.role for m in messages] == ["system", "user", "assistant"]
        assert messages[2].content == ""
        assert entry["sample_id"] in messages[1].content
        assert entry["reference"].startswith("The file is assessed as")
