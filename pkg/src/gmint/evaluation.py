"""Experiment protocols: intra-database (1-vs-1), mixed-database (1-vs-N) and
the gradient-vs-embedding comparison, with multi-seed sweeps over MINT sizes."""

from __future__ import annotations

import json
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .auditor import AuditorConfig, score, train_mint
from .metrics import RocCurve, auc, roc_curve
from .models import AuditedModel, AuditedModelSpec, TrainConfig, build_model, evaluate_accuracy, train_audited
from .probe import LayerSelector, build_mint_dataset
from .seeding import derive_seed, rng_for
from .text import Corpus, CorpusSplit, Sample, SynthSpec, build_vocab, split, synth_corpus

log = logging.getLogger(__name__)

DEFAULT_SIZE_PAIRS = [(2500, 2500), (2250, 2250), (1500, 1500), (1250, 1250), (750, 750)]


class InsufficientSamples(ValueError):
    pass


@dataclass
class SweepPlan:
    size_pairs: list = field(default_factory=lambda: list(DEFAULT_SIZE_PAIRS))
    repetitions: int = 1

    def __post_init__(self):
        self.size_pairs = [(int(a), int(b)) for a, b in self.size_pairs]
        if not self.size_pairs:
            raise ValueError("sweep plan needs at least one size pair")
        if any(a < 1 or b < 1 for a, b in self.size_pairs):
            raise ValueError("size pairs must be positive")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    def clamped(self, available_d: int, available_e: int) -> "SweepPlan":
        """Cap every pair at what the pools hold, keeping D and E balanced."""
        cap = min(available_d, available_e)
        return SweepPlan([(min(a, cap), min(b, cap)) for a, b in self.size_pairs], self.repetitions)


@dataclass
class Target:
    """An audited model together with the corpus split it was trained on."""

    corpus: Corpus
    split: CorpusSplit
    model: AuditedModel
    train_accuracy: float
    test_accuracy: float

    @property
    def members(self) -> list:
        return self.corpus.subset(self.split.train_D)

    @property
    def held_out(self) -> list:
        return self.corpus.subset(self.split.test)


def prepare_target(corpus: Corpus, model_spec: AuditedModelSpec, train_config: TrainConfig, seed: int = 0, ratio: float = 0.65) -> Target:
    """Split 65/35, fit the vocabulary on the training part and train the audited model."""
    sp = split(corpus, ratio, seed)
    members = corpus.subset(sp.train_D)
    vocab = build_vocab(members, model_spec.vocab_size)
    spec = replace(model_spec, num_classes=corpus.num_classes)
    model = build_model(spec, vocab)
    x, y = model.encode(members), np.array([s.label for s in members])
    model = train_audited(model, x, y, train_config)
    target = restore_target(corpus, sp, model)
    log.info("audited %s: train acc %.3f, test acc %.3f", spec.kind, target.train_accuracy, target.test_accuracy)
    return target


def restore_target(corpus: Corpus, corpus_split: CorpusSplit, model: AuditedModel) -> Target:
    """Re-attach a trained model to its corpus split, recomputing accuracies."""
    def acc(ids):
        samples = corpus.subset(ids)
        return evaluate_accuracy(model, model.encode(samples), np.array([s.label for s in samples]))

    return Target(corpus, corpus_split, model, acc(corpus_split.train_D), acc(corpus_split.test))


def foreign_samples(corpus: Corpus, num_classes: int) -> list:
    """Samples of another corpus, ids namespaced by corpus, labels folded into range."""
    return [Sample(f"{corpus.name}/{s.id}", s.text, s.label % num_classes) for s in corpus.samples]


@dataclass
class CellResult:
    cell: int
    size_d: int
    size_e: int
    repetition: int
    seed: int
    auc: float
    roc: RocCurve
    feature_kind: str
    input_dim: int
    d_ids: list
    e_ids: list
    pool_composition: dict

    def to_json(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "roc"}
        out["roc"] = {
            "fpr": self.roc.fpr.tolist(),
            "tpr": self.roc.tpr.tolist(),
            "thresholds": [float(t) if np.isfinite(t) else "inf" for t in self.roc.thresholds],
        }
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "CellResult":
        obj = dict(obj)
        r = obj.pop("roc")
        thr = np.array([np.inf if t == "inf" else t for t in r["thresholds"]], dtype=np.float64)
        return cls(roc=RocCurve(np.array(r["fpr"]), np.array(r["tpr"]), thr), **obj)


def intra_pool(target: Target) -> list:
    return [(s, "") for s in target.held_out]


def mixed_pool(target: Target, other_corpora: list) -> list:
    """Target held-out split pooled with every other corpus, as (sample, source) pairs."""
    if not other_corpora:
        raise ValueError("mixed protocol needs at least one other corpus")
    pool = intra_pool(target)
    for other in other_corpora:
        if other.name == target.corpus.name:
            raise ValueError(f"external corpus {other.name!r} has the same name as the target")
        pool += [(s, other.name) for s in foreign_samples(other, target.corpus.num_classes)]
    return pool


def composition(pairs) -> dict:
    return dict(sorted(Counter(src or "target" for _, src in pairs).items()))


def draw_cell(target: Target, e_pool: list, size_d: int, size_e: int, seed: int, cell: int) -> tuple[list, list]:
    """Uniform draws without replacement of the cell's D and E samples."""
    d_pool = target.members
    if size_d > len(d_pool) or size_e > len(e_pool):
        raise InsufficientSamples(
            f"size pair {size_d}/{size_e} needs {size_d} D and {size_e} E samples; "
            f"pools hold {len(d_pool)} and {len(e_pool)}"
        )
    rng = rng_for(seed, "mint-sample", cell)
    d_idx = np.sort(rng.choice(len(d_pool), size=size_d, replace=False))
    e_idx = np.sort(rng.choice(len(e_pool), size=size_e, replace=False))
    return [d_pool[i] for i in d_idx], [e_pool[i] for i in e_idx]


def cell_dataset(target: Target, e_pool: list, selector, feature_kind: str, size_d: int, size_e: int, seed: int, cell: int):
    d, e = draw_cell(target, e_pool, size_d, size_e, seed, cell)
    ds = build_mint_dataset(
        target.model, d, e, selector, feature_kind, derive_seed(seed, "mint-rows", cell), target.split.train_D
    )
    ds.meta["pool_composition"] = composition(e)
    return ds


def _run_cell(args) -> CellResult:
    (target, e_pool, selector, feature_kind, auditor_config, seed, cell, size_d, size_e, rep, permute) = args
    ds = cell_dataset(target, e_pool, selector, feature_kind, size_d, size_e, seed, cell)
    members = sorted(i for i, l in zip(ds.sample_ids, ds.labels) if l == 1)
    externals = sorted(i for i, l in zip(ds.sample_ids, ds.labels) if l == 0)
    pool = ds.meta["pool_composition"]
    if permute:
        labels = rng_for(seed, "null-permutation", cell).permutation(ds.labels)
        ds = ds.with_labels(labels, seed=derive_seed(seed, "mint-rows", cell))
    cfg = replace(auditor_config, seed=derive_seed(seed, "auditor", cell))
    auditor = train_mint(ds, cfg)
    _, logits = score(auditor, ds.features[ds.test_idx])
    y = ds.labels[ds.test_idx]
    return CellResult(
        cell, size_d, size_e, rep, cfg.seed, auc(logits, y), roc_curve(logits, y), feature_kind,
        ds.input_dim, members, externals, pool,
    )


@dataclass
class AuditReport:
    protocol: str
    audited_model_spec: dict
    selector: str
    feature_kind: str
    results: list
    seeds: dict
    config_hash: str = ""
    extra: dict = field(default_factory=dict)
    timestamps: dict = field(default_factory=dict)
    cells: list = field(default_factory=list, repr=False)

    def auc_at(self, size_pair) -> float:
        for r in self.results:
            if (r["size_D"], r["size_E"]) == tuple(size_pair):
                return r["auc_mean"]
        raise KeyError(size_pair)

    def to_json(self, roc_refs: Optional[dict] = None) -> dict:
        results = []
        for r in self.results:
            r = dict(r)
            if roc_refs:
                r["roc"] = [roc_refs[c] for c in r["cells"]]
            results.append(r)
        return {
            "audited_model_spec": self.audited_model_spec,
            "config_hash": self.config_hash,
            "extra": self.extra,
            "feature_kind": self.feature_kind,
            "protocol": self.protocol,
            "results": results,
            "schema_version": 1,
            "seeds": self.seeds,
            "selector": self.selector,
            "timestamps": self.timestamps,
        }

    def save(self, directory, name: str = "report") -> Path:
        """``<name>.json`` plus one ``threshold,fpr,tpr`` CSV per cell under ``roc/``."""
        directory = Path(directory)
        (directory / "roc").mkdir(parents=True, exist_ok=True)
        refs = {}
        for c in self.cells:
            rel = f"roc/{name}-cell{c.cell:03d}.csv"
            c.roc.to_csv(directory / rel)
            refs[c.cell] = rel
        path = directory / f"{name}.json"
        path.write_text(json.dumps(self.to_json(refs), indent=2, sort_keys=True) + "\n")
        return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_cells(
    target: Target,
    e_pool: list,
    selector: LayerSelector,
    feature_kind: str,
    plan: SweepPlan,
    auditor_config: AuditorConfig,
    seed: int,
    permute_labels: bool = False,
    jobs: int = 1,
    cell_cache=None,
    on_cell=None,
) -> list:
    """Run every (size pair, repetition) cell; results come back in cell order.

    Cell ``i * repetitions + r`` is repetition ``r`` of size pair ``i``; its
    sampling, MINT split and auditor seeds derive from ``seed`` and that index.
    ``e_pool`` holds ``(sample, source)`` pairs. ``cell_cache`` maps cell index
    to a CellResult finished by an earlier run; ``on_cell`` is called with each
    freshly computed cell (in completion order).
    """
    for nd, ne in plan.size_pairs:
        if nd > len(target.split.train_D) or ne > len(e_pool):
            raise InsufficientSamples(
                f"size pair {nd}/{ne} needs {nd} D and {ne} E samples; "
                f"pools hold {len(target.split.train_D)} and {len(e_pool)}"
            )
    args = []
    for i, (nd, ne) in enumerate(plan.size_pairs):
        for rep in range(plan.repetitions):
            cell = i * plan.repetitions + rep
            args.append((target, e_pool, selector, feature_kind, auditor_config, seed, cell, nd, ne, rep, permute_labels))
    by_cell = dict(cell_cache or {})
    todo = [a for a in args if a[6] not in by_cell]

    def done(result: CellResult) -> None:
        by_cell[result.cell] = result
        log.info("cell %d (%d/%d rep %d): AUC %.4f", result.cell, result.size_d, result.size_e, result.repetition, result.auc)
        if on_cell is not None:
            on_cell(result)

    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for fut in as_completed([pool.submit(_run_cell, a) for a in todo]):
                done(fut.result())
    else:
        for a in todo:
            done(_run_cell(a))
    return [by_cell[a[6]] for a in args]


def summarize(cells: list, plan: SweepPlan) -> list:
    out = []
    for i, (nd, ne) in enumerate(plan.size_pairs):
        mine = [c for c in cells if c.cell // plan.repetitions == i]
        aucs = [c.auc for c in mine]
        out.append(
            {
                "size_D": nd,
                "size_E": ne,
                "auc_mean": float(np.mean(aucs)),
                "auc_std": float(np.std(aucs)),
                "aucs": aucs,
                "cells": [c.cell for c in mine],
                "pool_composition": [c.pool_composition for c in mine],
            }
        )
    return out


def build_report(protocol, target, selector, feature_kind, plan, cells, seed, started, extra=None) -> AuditReport:
    return AuditReport(
        protocol=protocol,
        audited_model_spec=asdict(target.model.spec),
        selector=str(selector),
        feature_kind=feature_kind,
        results=summarize(cells, plan),
        seeds={"top_level": seed, "cells": [c.seed for c in cells], "repetitions": plan.repetitions},
        extra={
            "target_train_accuracy": target.train_accuracy,
            "target_test_accuracy": target.test_accuracy,
            "input_dim": cells[0].input_dim if cells else 0,
            **(extra or {}),
        },
        timestamps={"started": started, "finished": _now()},
        cells=cells,
    )


def run_intra_protocol(
    corpus: Corpus,
    model_spec: AuditedModelSpec,
    selector: LayerSelector,
    feature_kind: str,
    sweep_plan: SweepPlan,
    seed: int = 0,
    train_config: Optional[TrainConfig] = None,
    auditor_config: Optional[AuditorConfig] = None,
    target: Optional[Target] = None,
    permute_labels: bool = False,
    jobs: int = 1,
    cell_cache=None,
    on_cell=None,
) -> AuditReport:
    """D and E both drawn from ``corpus``: E from the held-out 35 %."""
    started = _now()
    target = target or prepare_target(corpus, model_spec, train_config or TrainConfig(seed=seed), seed)
    cells = run_cells(target, intra_pool(target), selector, feature_kind, sweep_plan, auditor_config or AuditorConfig(),
                      seed, permute_labels, jobs, cell_cache, on_cell)
    extra = {"permuted_labels": permute_labels} if permute_labels else {}
    return build_report("intra", target, selector, feature_kind, sweep_plan, cells, seed, started, extra)


def run_mixed_protocol(
    target_corpus: Corpus,
    other_corpora: list,
    model_spec: AuditedModelSpec,
    selector: LayerSelector,
    feature_kind: str,
    sweep_plan: SweepPlan,
    seed: int = 0,
    train_config: Optional[TrainConfig] = None,
    auditor_config: Optional[AuditorConfig] = None,
    target: Optional[Target] = None,
    jobs: int = 1,
    cell_cache=None,
    on_cell=None,
) -> AuditReport:
    """E drawn uniformly from the target's held-out split pooled with every other corpus."""
    if not other_corpora:
        raise ValueError("mixed protocol needs at least one other corpus")
    started = _now()
    target = target or prepare_target(target_corpus, model_spec, train_config or TrainConfig(seed=seed), seed)
    e_pool = mixed_pool(target, other_corpora)
    cells = run_cells(target, e_pool, selector, feature_kind, sweep_plan, auditor_config or AuditorConfig(), seed,
                      False, jobs, cell_cache, on_cell)
    return build_report("mixed", target, selector, feature_kind, sweep_plan, cells, seed, started,
                        {"e_pool_sizes": composition(e_pool)})


def compare_feature_kinds(
    corpus: Corpus,
    model_spec: AuditedModelSpec,
    selector: LayerSelector,
    size_pair: tuple,
    repetitions: int = 1,
    seed: int = 0,
    train_config: Optional[TrainConfig] = None,
    auditor_config: Optional[AuditorConfig] = None,
    target: Optional[Target] = None,
) -> dict:
    """Gradient vs embedding features under identical sampling and auditor settings."""
    target = target or prepare_target(corpus, model_spec, train_config or TrainConfig(seed=seed), seed)
    plan = SweepPlan([tuple(size_pair)], repetitions)
    e_pool = intra_pool(target)
    cfg = auditor_config or AuditorConfig()
    grad = run_cells(target, e_pool, selector, "gradient", plan, cfg, seed)
    emb = run_cells(target, e_pool, selector, "embedding", plan, cfg, seed)
    same = all(g.d_ids == e.d_ids and g.e_ids == e.e_ids for g, e in zip(grad, emb))
    return {
        "auc_gradient": float(np.mean([c.auc for c in grad])),
        "auc_embedding": float(np.mean([c.auc for c in emb])),
        "aucs_gradient": [c.auc for c in grad],
        "aucs_embedding": [c.auc for c in emb],
        "same_samples": same,
        "cells_gradient": grad,
        "cells_embedding": emb,
    }


@dataclass
class DeskExperiment:
    """Desk-scale synthetic setting in which a small MLP overfits its training split.

    6,000 two-class samples with weak class signal over a flat 600-word
    vocabulary; the MLP memorizes its 3,900 members within 50 epochs while
    staying near chance on held-out data.
    """

    corpus: SynthSpec = field(default_factory=lambda: SynthSpec(
        num_classes=2, samples_per_class=3000, vocab_size=600, class_signal_strength=0.1,
        min_length=8, max_length=16, zipf_exponent=0.5, name="desk"))
    model: AuditedModelSpec = field(default_factory=lambda: AuditedModelSpec(
        kind="mlp", vocab_size=602, max_len=16, embed_dim=8, hidden_dim=32))
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=50, learning_rate=3e-2, batch_size=512))
    size_pairs: tuple = ((1000, 1000), (250, 250))

    def make_corpus(self, seed: int) -> Corpus:
        return synth_corpus(replace(self.corpus, seed=seed))

    def make_target(self, seed: int, corpus: Optional[Corpus] = None) -> Target:
        corpus = corpus or self.make_corpus(seed)
        return prepare_target(corpus, replace(self.model, seed=seed), replace(self.train, seed=seed), seed)

    def external_corpus(self, seed: int) -> Corpus:
        """A thematically distinct corpus: disjoint word inventory, same size and shape."""
        return synth_corpus(replace(self.corpus, seed=seed, word_prefix="x", name="external"))
