import json

import pytest

from gmint.cli import ArtifactIndex, OutputLock, run, sha256_file

SMALL = {
    "schema_version": 1,
    "seed": 3,
    "corpus": {"synthetic": {"num_classes": 4, "samples_per_class": 40, "vocab_size": 120, "class_signal_strength": 0.3,
                             "min_length": 4, "max_length": 8}},
    "model": {"vocab_size": 150, "max_len": 8, "embed_dim": 4, "hidden_dim": 8},
    "train": {"epochs": 3, "batch_size": 32, "learning_rate": 0.01},
    "selector": "last:3",
    "auditor": {"hidden_layers": [16, 8, 4], "epochs": 2},
    "sweep": {"size_pairs": [[30, 30], [20, 20]], "repetitions": 2},
    "mint_size": [30, 30],
}
EXTERNAL = {"synthetic": {"num_classes": 2, "samples_per_class": 30, "vocab_size": 60, "word_prefix": "q"}}
STAGES = ["gen-data", "train-target", "extract-features", "train-auditor", "evaluate"]


def config(tmp_path, name="cfg.json", **changes):
    path = tmp_path / name
    path.write_text(json.dumps({**SMALL, **changes}))
    return str(path)


def cli(cmd, cfg, out, *extra):
    return run([cmd, "--config", cfg, "--output", str(out), *extra])


def strip_timestamps(path):
    obj = json.loads(path.read_text())
    obj.pop("timestamps")
    return obj


def test_gen_data_writes_corpus_and_is_reproducible(tmp_path):
    cfg = config(tmp_path)
    assert cli("gen-data", cfg, tmp_path / "a") == 0
    assert cli("gen-data", cfg, tmp_path / "b") == 0
    for name in ("target.jsonl", "target.jsonl.meta.json"):
        a, b = tmp_path / "a" / "corpus" / name, tmp_path / "b" / "corpus" / name
        assert a.exists() and sha256_file(a) == sha256_file(b)
    meta = json.loads((tmp_path / "a" / "corpus" / "target.jsonl.meta.json").read_text())
    assert meta["num_classes"] == 4 and "config_hash" in meta


def test_usage_errors(tmp_path, capsys):
    assert run(["gen-data", "--config", str(tmp_path / "missing.json"), "--output", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 1}))
    assert cli("gen-data", str(bad), tmp_path / "o") == 2
    assert "corpus" in capsys.readouterr().err
    assert cli("gen-data", config(tmp_path, schema_version=7), tmp_path / "o") == 2
    assert cli("gen-data", config(tmp_path, model={"kind": "rnn"}), tmp_path / "o") == 2
    assert cli("gen-data", config(tmp_path, bogus=1), tmp_path / "o") == 2
    assert cli("sweep", config(tmp_path), tmp_path / "o", "--protocol", "mixed") == 2
    assert run(["gen-data", "--output", str(tmp_path)]) == 2
    assert run(["frobnicate"]) == 2
    assert cli("gen-data", config(tmp_path), tmp_path / "o", "--seed", "-1") == 2


def test_full_pipeline(tmp_path):
    cfg, out = config(tmp_path), tmp_path / "run"
    for stage in STAGES:
        assert cli(stage, cfg, out) == 0, stage
    report = json.loads((out / "report" / "report.json").read_text())
    assert report["protocol"] == "intra" and len(report["results"]) == 1
    assert report["audited_model_spec"]["num_classes"] == 4
    assert (out / "report" / report["results"][0]["roc"][0]).exists()
    index = ArtifactIndex.load(out)
    assert {"corpus", "model", "features", "auditor", "report"} <= set(index.entries)
    assert report["config_hash"] == index.entries["report"]["config_hash"]
    assert run(["verify", "--output", str(out)]) == 0


def test_missing_and_tampered_upstream(tmp_path, capsys):
    cfg, out = config(tmp_path), tmp_path / "run"
    assert cli("evaluate", cfg, out) == 3
    assert cli("gen-data", cfg, out) == 0
    assert cli("train-target", cfg, out) == 0
    params = out / "model" / "params.gmwt"
    expected = ArtifactIndex.load(out).entries["model"]["sha256"]
    params.write_bytes(params.read_bytes() + b"\0")
    capsys.readouterr()
    assert cli("extract-features", cfg, out) == 3
    err = capsys.readouterr().err
    assert "hash mismatch" in err and expected in err
    assert run(["verify", "--output", str(out)]) == 3


def test_stale_upstream_is_rejected(tmp_path, capsys):
    out = tmp_path / "run"
    cfg = config(tmp_path)
    assert cli("gen-data", cfg, out) == 0 and cli("train-target", cfg, out) == 0
    changed = config(tmp_path, "changed.json", train={**SMALL["train"], "epochs": 4})
    assert cli("extract-features", changed, out) == 3
    assert "stale" in capsys.readouterr().err
    # auditor settings are downstream of the model, so the model stays valid
    other_auditor = config(tmp_path, "aud.json", auditor={"hidden_layers": [8, 4, 2], "epochs": 1})
    assert cli("extract-features", other_auditor, out) == 0


def test_sweep_default_plan_is_clamped(tmp_path):
    cfg = {k: v for k, v in SMALL.items() if k != "sweep"}
    path = tmp_path / "default.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "run"
    assert cli("sweep", str(path), out) == 0
    report = json.loads((out / "sweep" / "report.json").read_text())
    assert len(report["results"]) == 5
    # 160 samples: 104 members, 56 held out
    assert all(r["size_D"] == r["size_E"] == 56 for r in report["results"][:4])


def test_mixed_sweep_records_composition(tmp_path):
    cfg, out = config(tmp_path, external_corpora=[EXTERNAL]), tmp_path / "run"
    assert cli("sweep", cfg, out, "--protocol", "mixed") == 0
    report = json.loads((out / "sweep" / "report.json").read_text())
    assert report["protocol"] == "mixed"
    assert report["extra"]["e_pool_sizes"] == {"external-1": 60, "target": 56}
    for r in report["results"]:
        assert all(sum(c.values()) == r["size_E"] for c in r["pool_composition"])


def test_sweep_resumes_from_completed_cells(tmp_path):
    cfg, out = config(tmp_path), tmp_path / "run"
    assert cli("sweep", cfg, out) == 0
    first = strip_timestamps(out / "sweep" / "report.json")
    index = ArtifactIndex.load(out)
    cell1 = out / index.entries["sweep.cell.001"]["path"]
    stamp = cell1.stat().st_mtime_ns
    # simulate an interrupted run: cell 2 and the report never got written
    (out / index.entries["sweep.cell.002"]["path"]).unlink()
    del index.entries["sweep.cell.002"], index.entries["sweep.report"]
    index.save()
    assert cli("sweep", cfg, out) == 0
    assert cell1.stat().st_mtime_ns == stamp
    assert strip_timestamps(out / "sweep" / "report.json") == first


def test_two_runs_are_byte_identical(tmp_path):
    cfg = config(tmp_path)
    for name in ("a", "b"):
        for stage in STAGES:
            assert cli(stage, cfg, tmp_path / name) == 0
        assert cli("sweep", cfg, tmp_path / name) == 0
    for rel in ("features/features.gmnt", "model/params.gmwt", "auditor/params.gmwt"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    for rel in ("report/report.json", "sweep/report.json"):
        assert strip_timestamps(tmp_path / "a" / rel) == strip_timestamps(tmp_path / "b" / rel)
    for csv in (tmp_path / "a" / "sweep" / "roc").iterdir():
        assert csv.read_bytes() == (tmp_path / "b" / "sweep" / "roc" / csv.name).read_bytes()


def test_flags_override_config(tmp_path):
    cfg, out = config(tmp_path), tmp_path / "run"
    for stage in STAGES[:3]:
        assert cli(stage, cfg, out, "--seed", "11", "--feature-kind", "embedding", "--selector", "first:1") == 0
    meta = json.loads((out / "features" / "features.json").read_text())
    assert meta["feature_kind"] == "embedding"


def test_concurrent_invocation_is_rejected(tmp_path, capsys):
    out = tmp_path / "run"
    with OutputLock(out):
        assert cli("gen-data", config(tmp_path), out) == 2
    assert "in use" in capsys.readouterr().err
    assert cli("gen-data", config(tmp_path), out) == 0


def test_numeric_failure_exit_code(tmp_path):
    cfg, out = config(tmp_path, train={"epochs": 2, "batch_size": 32, "learning_rate": 1e300}), tmp_path / "run"
    assert cli("gen-data", cfg, out) == 0
    with pytest.warns(RuntimeWarning):
        assert cli("train-target", cfg, out) == 4
