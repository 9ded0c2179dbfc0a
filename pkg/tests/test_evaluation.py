import json

import numpy as np
import pytest

from gmint.auditor import AuditorConfig
from gmint.evaluation import (
    DEFAULT_SIZE_PAIRS,
    CellResult,
    InsufficientSamples,
    SweepPlan,
    compare_feature_kinds,
    prepare_target,
    run_intra_protocol,
    run_mixed_protocol,
)
from gmint.models import AuditedModelSpec, TrainConfig
from gmint.probe import LayerSelector
from gmint.text import SynthSpec, synth_corpus

SPEC = AuditedModelSpec(kind="mlp", vocab_size=120, max_len=8, embed_dim=4, hidden_dim=8)
TRAIN = TrainConfig(epochs=5, batch_size=32, learning_rate=1e-2)
AUDITOR = AuditorConfig(hidden_layers=(16, 8, 4), epochs=3)
SEL = LayerSelector.parse("last:3")


@pytest.fixture(scope="module")
def corpus():
    return synth_corpus(SynthSpec(num_classes=2, samples_per_class=60, vocab_size=100, seed=1, max_length=8, min_length=4))


@pytest.fixture(scope="module")
def target(corpus):
    return prepare_target(corpus, SPEC, TRAIN, seed=1)


def test_sweep_plan_defaults_and_clamping():
    plan = SweepPlan()
    assert plan.size_pairs == DEFAULT_SIZE_PAIRS and plan.repetitions == 1
    assert SweepPlan().clamped(1800, 2000).size_pairs == [(1800, 1800), (1800, 1800), (1500, 1500), (1250, 1250), (750, 750)]
    for bad in ({"size_pairs": []}, {"size_pairs": [(0, 3)]}, {"repetitions": 0}):
        with pytest.raises(ValueError):
            SweepPlan(**bad)


def test_intra_report_structure(corpus, target, tmp_path):
    plan = SweepPlan([(30, 30), (20, 20), (10, 10)], repetitions=2)
    report = run_intra_protocol(corpus, SPEC, SEL, "gradient", plan, seed=4, auditor_config=AUDITOR, target=target)
    assert report.protocol == "intra" and len(report.results) == 3
    for r in report.results:
        assert 0.0 <= r["auc_mean"] <= 1.0 and len(r["aucs"]) == 2
        assert r["auc_std"] == pytest.approx(np.std(r["aucs"]))
    assert len(set(report.seeds["cells"])) == 6
    path = report.save(tmp_path)
    obj = json.loads(path.read_text())
    assert list(obj) == sorted(obj)
    for r in obj["results"]:
        for ref in r["roc"]:
            assert (tmp_path / ref).read_text().startswith("threshold,fpr,tpr\n")


def test_reports_are_reproducible(corpus, target):
    plan = SweepPlan([(20, 20)], repetitions=2)
    a = run_intra_protocol(corpus, SPEC, SEL, "gradient", plan, seed=2, auditor_config=AUDITOR, target=target)
    b = run_intra_protocol(corpus, SPEC, SEL, "gradient", plan, seed=2, auditor_config=AUDITOR, target=target)
    ja, jb = a.to_json(), b.to_json()
    ja.pop("timestamps"), jb.pop("timestamps")
    assert json.dumps(ja, sort_keys=True) == json.dumps(jb, sort_keys=True)


def test_parallel_cells_match_serial(corpus, target):
    plan = SweepPlan([(20, 20), (10, 10)])
    serial = run_intra_protocol(corpus, SPEC, SEL, "gradient", plan, seed=5, auditor_config=AUDITOR, target=target)
    parallel = run_intra_protocol(corpus, SPEC, SEL, "gradient", plan, seed=5, auditor_config=AUDITOR, target=target, jobs=2)
    assert serial.results == parallel.results


def test_insufficient_samples_names_pair(corpus, target):
    # held-out split holds 42 samples
    plan = SweepPlan([(30, 30), (60, 60), (70, 70)])
    with pytest.raises(InsufficientSamples, match="60/60"):
        run_intra_protocol(corpus, SPEC, SEL, "gradient", plan, auditor_config=AUDITOR, target=target)


def test_mixed_pool_composition(corpus, target):
    other = synth_corpus(SynthSpec(num_classes=3, samples_per_class=20, vocab_size=50, word_prefix="q", seed=2))
    plan = SweepPlan([(30, 40)], repetitions=2)
    report = run_mixed_protocol(corpus, [other], SPEC, SEL, "gradient", plan, auditor_config=AUDITOR, target=target)
    assert report.protocol == "mixed"
    assert report.extra["e_pool_sizes"] == {other.name: 60, "target": len(target.held_out)}
    for comp in report.results[0]["pool_composition"]:
        assert sum(comp.values()) == 40
    assert any(other.name in comp for comp in report.results[0]["pool_composition"])
    with pytest.raises(ValueError):
        run_mixed_protocol(corpus, [], SPEC, SEL, "gradient", plan, target=target)


def test_compare_uses_identical_samples(corpus, target):
    out = compare_feature_kinds(corpus, SPEC, SEL, (20, 20), repetitions=2, seed=3, auditor_config=AUDITOR, target=target)
    assert out["same_samples"]
    assert out["cells_gradient"][0].feature_kind == "gradient" and out["cells_embedding"][0].feature_kind == "embedding"
    assert out["cells_embedding"][0].input_dim == SPEC.hidden_dim


def test_permuted_labels_run(corpus, target):
    plan = SweepPlan([(30, 30)], repetitions=2)
    report = run_intra_protocol(corpus, SPEC, SEL, "gradient", plan, seed=1, auditor_config=AUDITOR, target=target, permute_labels=True)
    assert report.extra["permuted_labels"] is True
    assert all(0 <= a <= 1 for a in report.results[0]["aucs"])


def test_cell_json_round_trip(corpus, target):
    report = run_intra_protocol(corpus, SPEC, SEL, "gradient", SweepPlan([(10, 10)]), auditor_config=AUDITOR, target=target)
    cell = report.cells[0]
    back = CellResult.from_json(json.loads(json.dumps(cell.to_json())))
    assert back.auc == cell.auc and back.d_ids == cell.d_ids
    assert np.array_equal(back.roc.thresholds, cell.roc.thresholds)


def test_cell_cache_is_reused(corpus, target):
    plan = SweepPlan([(20, 20), (10, 10)])
    first = run_intra_protocol(corpus, SPEC, SEL, "gradient", plan, auditor_config=AUDITOR, target=target)
    seen = []
    again = run_intra_protocol(corpus, SPEC, SEL, "gradient", plan, auditor_config=AUDITOR, target=target,
                               cell_cache={0: first.cells[0]}, on_cell=seen.append)
    assert [c.cell for c in seen] == [1]
    assert again.results == first.results
