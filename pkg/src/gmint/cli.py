"""``gmint`` command line: staged pipeline plus sweeps.

Stages write into one output directory and register every file in
``index.json`` (role -> relative path, SHA-256, config hash of the sections the
stage depends on). Downstream stages refuse missing, tampered or stale inputs.

Config file (JSON, ``schema_version`` 1)::

    {
      "schema_version": 1,
      "seed": 0,
      "corpus": {"synthetic": {...SynthSpec fields}} | {"path": "data.csv"},
      "external_corpora": [ same shape as corpus, ... ],
      "model": {...AuditedModelSpec fields},
      "train": {...TrainConfig fields},
      "selector": "first:2",
      "feature_kind": "gradient",
      "auditor": {...AuditorConfig fields},
      "sweep": {"size_pairs": [[2500, 2500], ...], "repetitions": 1, "clamp": true},
      "mint_size": [1000, 1000],
      "protocol": "intra",
      "output_dir": "runs/demo"
    }

Every key except ``schema_version`` and ``corpus`` is optional. Model, training
and auditor seeds are always taken from the top-level ``seed``.

Exit codes: 0 success, 2 usage/config error, 3 missing or invalid upstream
artifact, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import fcntl
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .auditor import AuditorConfig, MintAuditor, score, train_mint
from .evaluation import (
    AuditReport,
    CellResult,
    SweepPlan,
    Target,
    build_report,
    cell_dataset,
    composition,
    intra_pool,
    mixed_pool,
    prepare_target,
    restore_target,
    run_cells,
    _now,
)
from .metrics import auc, roc_curve
from .models import AuditedModel, AuditedModelSpec, TrainConfig
from .probe import FEATURE_KINDS, LayerSelector, assemble, read_features, write_features
from .seeding import derive_seed
from .text import Corpus, CorpusSplit, SynthSpec, export, ingest, synth_corpus

log = logging.getLogger("gmint")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_DEPENDENCY, EXIT_NUMERIC = 0, 2, 3, 4
PROTOCOLS = ("intra", "mixed")


class UsageError(Exception):
    code = EXIT_USAGE


class DependencyError(Exception):
    code = EXIT_DEPENDENCY


# --------------------------------------------------------------------------- config


def _dataclass_from(cls, obj, where: str):
    if obj is None:
        return cls()
    if not isinstance(obj, dict):
        raise UsageError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise UsageError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**obj)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{where}: {exc}") from None


def _corpus_source(obj, where: str) -> dict:
    if not isinstance(obj, dict) or len(obj) != 1 or not ({"synthetic", "path"} & set(obj)):
        raise UsageError(f"{where}: expected {{\"synthetic\": {{...}}}} or {{\"path\": \"...\"}}")
    if "synthetic" in obj:
        _dataclass_from(SynthSpec, obj["synthetic"], f"{where}.synthetic").validate()
    elif not isinstance(obj["path"], str):
        raise UsageError(f"{where}.path must be a string")
    return obj


@dataclass
class ExperimentConfig:
    corpus: dict
    external_corpora: list = field(default_factory=list)
    model: AuditedModelSpec = field(default_factory=AuditedModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    selector: str = "first:2"
    feature_kind: str = "gradient"
    auditor: AuditorConfig = field(default_factory=AuditorConfig)
    sweep: SweepPlan = field(default_factory=SweepPlan)
    clamp_sweep: bool = True
    mint_size: Optional[tuple] = None
    protocol: str = "intra"
    seed: int = 0
    output_dir: Optional[str] = None
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    # canonical form --------------------------------------------------------

    def sections(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "corpus": self.corpus,
            "external_corpora": self.external_corpora,
            "model": asdict(self.model),
            "train": asdict(self.train),
            "selector": self.selector,
            "feature_kind": self.feature_kind,
            "auditor": asdict(self.auditor),
            "sweep": {
                "size_pairs": [list(p) for p in self.sweep.size_pairs],
                "repetitions": self.sweep.repetitions,
                "clamp": self.clamp_sweep,
            },
            "mint_size": list(self.mint_size) if self.mint_size else None,
            "protocol": self.protocol,
        }

    def config_hash(self, keys=None) -> str:
        """SHA-256 of the canonical JSON of the given sections (all by default)."""
        sec = self.sections()
        if keys is not None:
            sec = {k: sec[k] for k in ("schema_version", *keys)}
        blob = json.dumps(sec, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def stage_hash(self, stage: str) -> str:
        return self.config_hash(STAGE_SECTIONS[stage])

    @classmethod
    def from_json(cls, obj: dict, base_dir=".") -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise UsageError("config must be a JSON object")
        version = obj.get("schema_version")
        if version != SCHEMA_VERSION:
            raise UsageError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        known = {"schema_version", "seed", "corpus", "external_corpora", "model", "train", "selector",
                 "feature_kind", "auditor", "sweep", "mint_size", "protocol", "output_dir"}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
        if "corpus" not in obj:
            raise UsageError("config needs a 'corpus' section")
        sweep = dict(obj.get("sweep") or {})
        clamp = bool(sweep.pop("clamp", True))
        cfg = cls(
            corpus=_corpus_source(obj["corpus"], "corpus"),
            external_corpora=[_corpus_source(c, f"external_corpora[{i}]") for i, c in enumerate(obj.get("external_corpora", []))],
            model=_dataclass_from(AuditedModelSpec, obj.get("model"), "model"),
            train=_dataclass_from(TrainConfig, obj.get("train"), "train"),
            selector=obj.get("selector", "first:2"),
            feature_kind=obj.get("feature_kind", "gradient"),
            auditor=_dataclass_from(AuditorConfig, obj.get("auditor"), "auditor"),
            sweep=_dataclass_from(SweepPlan, sweep, "sweep"),
            clamp_sweep=clamp,
            mint_size=tuple(obj["mint_size"]) if obj.get("mint_size") else None,
            protocol=obj.get("protocol", "intra"),
            seed=obj.get("seed", 0),
            output_dir=obj.get("output_dir"),
            base_dir=Path(base_dir),
        )
        return cfg.validated()

    def validated(self) -> "ExperimentConfig":
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise UsageError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.protocol not in PROTOCOLS:
            raise UsageError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.protocol == "mixed" and not self.external_corpora:
            raise UsageError("protocol 'mixed' needs at least one entry in external_corpora")
        if self.feature_kind not in FEATURE_KINDS:
            raise UsageError(f"feature_kind must be one of {FEATURE_KINDS}, got {self.feature_kind!r}")
        try:
            LayerSelector.parse(self.selector)
            self.model.validate()
            self.train.validate()
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if self.mint_size is not None and (len(self.mint_size) != 2 or min(self.mint_size) < 1):
            raise UsageError("mint_size must be a pair of positive integers")
        # stage seeds follow the top-level seed
        self.model = replace(self.model, seed=self.seed)
        self.train = replace(self.train, seed=self.seed)
        return self


_CORPUS = ("seed", "corpus", "external_corpora")
_MODEL = _CORPUS + ("model", "train")
_MINT = _MODEL + ("selector", "feature_kind", "sweep", "protocol")
# config sections each stage's artifacts depend on
STAGE_SECTIONS = {
    "corpus": _CORPUS,
    "model": _MODEL,
    "features": _MINT + ("mint_size",),
    "auditor": _MINT + ("mint_size", "auditor"),
    "report": _MINT + ("mint_size", "auditor"),
    "sweep": _MINT + ("auditor",),
}


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    return ExperimentConfig.from_json(obj, path.parent)


# --------------------------------------------------------------------------- artifacts


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class ArtifactIndex:
    """``index.json``: artifact role -> relative path, content hash, config hash."""

    root: Path
    entries: dict = field(default_factory=dict)

    @property
    def path(self) -> Path:
        return self.root / "index.json"

    @classmethod
    def load(cls, root) -> "ArtifactIndex":
        root = Path(root)
        p = root / "index.json"
        entries = json.loads(p.read_text())["artifacts"] if p.exists() else {}
        return cls(root, entries)

    def save(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps({"artifacts": self.entries, "schema_version": SCHEMA_VERSION}, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, self.path)

    def record(self, role: str, path, config_hash: str) -> None:
        rel = Path(path).resolve().relative_to(self.root.resolve()).as_posix()
        self.entries[role] = {"path": rel, "sha256": sha256_file(path), "config_hash": config_hash}
        self.save()

    def check(self, role: str, config_hash: Optional[str] = None) -> Optional[str]:
        """Problem description for ``role``, or None when it is present and valid."""
        e = self.entries.get(role)
        if e is None:
            return f"missing artifact {role!r}; run the upstream stage first"
        p = self.root / e["path"]
        if not p.exists():
            return f"artifact {role!r} ({e['path']}) is listed but missing; expected sha256 {e['sha256']}"
        actual = sha256_file(p)
        if actual != e["sha256"]:
            return f"hash mismatch for {role!r} ({e['path']}): expected sha256 {e['sha256']}, found {actual}"
        if config_hash is not None and e["config_hash"] != config_hash:
            return f"artifact {role!r} is stale: built for config {e['config_hash'][:12]}, current config {config_hash[:12]}"
        return None

    def require(self, role: str, config_hash: Optional[str] = None) -> Path:
        problem = self.check(role, config_hash)
        if problem:
            raise DependencyError(problem)
        return self.root / self.entries[role]["path"]

    def verify(self) -> list:
        return [(role, self.check(role)) for role in sorted(self.entries)]


class OutputLock:
    """Exclusive advisory lock on ``<output>/.gmint.lock``; released on exit."""

    def __init__(self, root: Path):
        self.path = Path(root) / ".gmint.lock"
        self.fh = None

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.fh = open(self.path, "w")
        try:
            fcntl.flock(self.fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            self.fh.close()
            raise UsageError(f"output directory {self.path.parent} is in use by another gmint process") from None
        return self

    def __exit__(self, *exc):
        fcntl.flock(self.fh, fcntl.LOCK_UN)
        self.fh.close()


def _stamp_json(path: Path, config_hash: str) -> None:
    obj = json.loads(path.read_text())
    obj["config_hash"] = config_hash
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_json(path: Path, obj: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


# --------------------------------------------------------------------------- stages


def _make_corpus(cfg: ExperimentConfig, source: dict, index: int) -> Corpus:
    if "synthetic" in source:
        spec = dict(source["synthetic"])
        spec.setdefault("seed", derive_seed(cfg.seed, "corpus", index))
        if index > 0:
            spec.setdefault("name", f"external-{index}")
        return synth_corpus(SynthSpec(**spec))
    path = Path(source["path"])
    if not path.is_absolute():
        path = cfg.base_dir / path
    if not path.exists():
        raise DependencyError(f"corpus file {path} not found")
    return ingest(path)


def cmd_gen_data(cfg: ExperimentConfig, index: ArtifactIndex) -> list:
    h = cfg.stage_hash("corpus")
    out = []
    for i, source in enumerate([cfg.corpus, *cfg.external_corpora]):
        corpus = _make_corpus(cfg, source, i)
        corpus.metadata["config_hash"] = h
        role = "corpus" if i == 0 else f"corpus.external.{i}"
        path = export(corpus, index.root / "corpus" / ("target.jsonl" if i == 0 else f"external-{i}.jsonl"))
        index.record(role, path, h)
        index.record(role + ".meta", path.with_name(path.name + ".meta.json"), h)
        log.info("wrote %s (%d samples)", path, len(corpus))
        out.append(path)
    return out


def _load_corpora(cfg: ExperimentConfig, index: ArtifactIndex) -> tuple[Corpus, list]:
    h = cfg.stage_hash("corpus")
    target = ingest(index.require("corpus", h))
    index.require("corpus.meta", h)
    others = []
    for i in range(1, len(cfg.external_corpora) + 1):
        others.append(ingest(index.require(f"corpus.external.{i}", h)))
    return target, others


def cmd_train_target(cfg: ExperimentConfig, index: ArtifactIndex) -> Target:
    corpus, _ = _load_corpora(cfg, index)
    target = prepare_target(corpus, cfg.model, cfg.train, cfg.seed)
    _save_target(cfg, index, target)
    return target


def _save_target(cfg: ExperimentConfig, index: ArtifactIndex, target: Target) -> None:
    h = cfg.stage_hash("model")
    wpath, mpath = target.model.save(index.root / "model")
    _stamp_json(mpath, h)
    spath = _write_json(index.root / "model" / "split.json", {
        **target.split.to_json(),
        "config_hash": h,
        "train_accuracy": target.train_accuracy,
        "test_accuracy": target.test_accuracy,
    })
    for role, p in (("model", wpath), ("model.meta", mpath), ("model.split", spath)):
        index.record(role, p, h)


def _load_target(cfg: ExperimentConfig, index: ArtifactIndex) -> Target:
    corpus, _ = _load_corpora(cfg, index)
    h = cfg.stage_hash("model")
    index.require("model", h)
    index.require("model.meta", h)
    sp = json.loads(index.require("model.split", h).read_text())
    model = AuditedModel.load(index.root / "model")
    return restore_target(corpus, CorpusSplit(sp["train_D"], sp["test"], sp["ratio"], sp["seed"]), model)


def _e_pool(cfg: ExperimentConfig, index: ArtifactIndex, target: Target) -> list:
    if cfg.protocol == "mixed":
        _, others = _load_corpora(cfg, index)
        return mixed_pool(target, others)
    return intra_pool(target)


def _mint_size(cfg: ExperimentConfig, target: Target, e_pool: list) -> tuple:
    if cfg.mint_size:
        return tuple(cfg.mint_size)
    return _plan(cfg, target, e_pool).size_pairs[0]


def _plan(cfg: ExperimentConfig, target: Target, e_pool: list) -> SweepPlan:
    if cfg.clamp_sweep:
        return cfg.sweep.clamped(len(target.split.train_D), len(e_pool))
    return cfg.sweep


def cmd_extract_features(cfg: ExperimentConfig, index: ArtifactIndex) -> Path:
    target = _load_target(cfg, index)
    e_pool = _e_pool(cfg, index, target)
    nd, ne = _mint_size(cfg, target, e_pool)
    ds = cell_dataset(target, e_pool, LayerSelector.parse(cfg.selector), cfg.feature_kind, nd, ne, cfg.seed, 0)
    h = cfg.stage_hash("features")
    fpath = write_features(index.root / "features" / "features.gmnt", ds)
    spath = _write_json(index.root / "features" / "features.json", {
        "config_hash": h,
        "feature_kind": ds.feature_kind,
        "selector": str(ds.selector),
        "model_fingerprint": ds.model_fingerprint.hex(),
        "size_D": nd,
        "size_E": ne,
        "sources": ds.sources,
        "train_idx": ds.train_idx.tolist(),
        "test_idx": ds.test_idx.tolist(),
        "pool_composition": ds.meta["pool_composition"],
    })
    index.record("features", fpath, h)
    index.record("features.meta", spath, h)
    return fpath


def _load_mint(cfg: ExperimentConfig, index: ArtifactIndex):
    h = cfg.stage_hash("features")
    ff = read_features(index.require("features", h))
    meta = json.loads(index.require("features.meta", h).read_text())
    ds = assemble(ff.sample_ids, ff.features, ff.labels, meta["sources"], ff.model_fingerprint, ff.selector,
                  ff.feature_kind, derive_seed(cfg.seed, "mint-rows", 0), shuffle=False)
    if ds.train_idx.tolist() != meta["train_idx"]:
        raise DependencyError("feature sidecar split does not match the recorded MINT split")
    ds.meta.update(meta)
    return ds


def cmd_train_auditor(cfg: ExperimentConfig, index: ArtifactIndex) -> MintAuditor:
    ds = _load_mint(cfg, index)
    auditor = train_mint(ds, replace(cfg.auditor, seed=derive_seed(cfg.seed, "auditor", 0)))
    h = cfg.stage_hash("auditor")
    wpath, mpath = auditor.save(index.root / "auditor")
    _stamp_json(mpath, h)
    index.record("auditor", wpath, h)
    index.record("auditor.meta", mpath, h)
    return auditor


def cmd_evaluate(cfg: ExperimentConfig, index: ArtifactIndex) -> AuditReport:
    started = _now()
    ds = _load_mint(cfg, index)
    h = cfg.stage_hash("auditor")
    index.require("auditor", h)
    index.require("auditor.meta", h)
    auditor = MintAuditor.load(index.root / "auditor")
    target = _load_target(cfg, index)
    _, logits = score(auditor, ds.features[ds.test_idx])
    y = ds.labels[ds.test_idx]
    cell = CellResult(
        0, ds.meta["size_D"], ds.meta["size_E"], 0, auditor.config.seed, auc(logits, y), roc_curve(logits, y),
        ds.feature_kind, ds.input_dim,
        sorted(i for i, l in zip(ds.sample_ids, ds.labels) if l == 1),
        sorted(i for i, l in zip(ds.sample_ids, ds.labels) if l == 0),
        ds.meta["pool_composition"],
    )
    plan = SweepPlan([(cell.size_d, cell.size_e)], 1)
    report = build_report(cfg.protocol, target, ds.selector, ds.feature_kind, plan, [cell], cfg.seed, started)
    report.config_hash = cfg.stage_hash("report")
    path = report.save(index.root / "report", "report")
    index.record("report", path, report.config_hash)
    print(f"AUC {cell.auc:.4f} on {len(y)} MINT-test rows ({cell.size_d}/{cell.size_e})")
    return report


def cmd_sweep(cfg: ExperimentConfig, index: ArtifactIndex, jobs: int = 1) -> AuditReport:
    started = _now()
    if index.check("corpus", cfg.stage_hash("corpus")):
        cmd_gen_data(cfg, index)
    if any(index.check(r, cfg.stage_hash("model")) for r in ("model", "model.meta", "model.split")):
        log.info("training audited model")
        target = cmd_train_target(cfg, index)
    else:
        target = _load_target(cfg, index)
    e_pool = _e_pool(cfg, index, target)
    plan = _plan(cfg, target, e_pool)
    h = cfg.stage_hash("sweep")

    cache = {}
    for role in sorted(index.entries):
        if role.startswith("sweep.cell.") and index.check(role, h) is None:
            c = CellResult.from_json(json.loads((index.root / index.entries[role]["path"]).read_text()))
            cache[c.cell] = c
    if cache:
        log.info("resuming sweep: %d cell(s) already complete", len(cache))

    def save_cell(c: CellResult) -> None:
        p = _write_json(index.root / "sweep" / "cells" / f"cell-{c.cell:03d}.json", c.to_json())
        index.record(f"sweep.cell.{c.cell:03d}", p, h)

    cells = run_cells(target, e_pool, LayerSelector.parse(cfg.selector), cfg.feature_kind, plan, cfg.auditor,
                      cfg.seed, jobs=jobs, cell_cache=cache, on_cell=save_cell)
    extra = {"e_pool_sizes": composition(e_pool)} if cfg.protocol == "mixed" else {}
    report = build_report(cfg.protocol, target, LayerSelector.parse(cfg.selector), cfg.feature_kind, plan, cells,
                          cfg.seed, started, extra)
    report.config_hash = h
    path = report.save(index.root / "sweep", "report")
    index.record("sweep.report", path, h)
    for r in report.results:
        print(f"{r['size_D']}/{r['size_E']}: AUC {r['auc_mean']:.4f} ± {r['auc_std']:.4f}")
    return report


def cmd_verify(index: ArtifactIndex) -> int:
    problems = 0
    if not index.entries:
        print(f"no artifacts recorded in {index.path}")
        return EXIT_DEPENDENCY
    for role, problem in index.verify():
        print(f"{'FAIL' if problem else 'ok  '} {role}" + (f": {problem}" if problem else ""))
        problems += problem is not None
    return EXIT_DEPENDENCY if problems else EXIT_OK


# --------------------------------------------------------------------------- entry point

COMMANDS = ("gen-data", "train-target", "extract-features", "train-auditor", "evaluate", "sweep", "verify")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--output", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="top-level seed (unsigned 64-bit)")
    common.add_argument("--protocol", choices=PROTOCOLS)
    common.add_argument("--feature-kind", choices=FEATURE_KINDS)
    common.add_argument("--selector", help="first:K | last:K | names:a,b")
    common.add_argument("--jobs", type=int, default=1, help="parallel sweep cells")
    parser = argparse.ArgumentParser(prog="gmint", description="Gradient-based membership inference audits.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _resolve(args) -> tuple[Optional[ExperimentConfig], Path]:
    cfg = None
    if args.command != "verify" or args.config:
        if not args.config:
            raise UsageError(f"{args.command} needs --config")
        cfg = load_config(args.config)
        overrides = {
            "seed": args.seed,
            "protocol": args.protocol,
            "feature_kind": args.feature_kind,
            "selector": args.selector,
        }
        cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None}).validated()
    out = args.output or (cfg.output_dir and str(cfg.base_dir / cfg.output_dir) if cfg else None)
    if not out:
        raise UsageError("no output directory: pass --output or set output_dir in the config")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return cfg, Path(out)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg, out = _resolve(args)
        if args.command == "verify":
            return cmd_verify(ArtifactIndex.load(out))
        with OutputLock(out):
            index = ArtifactIndex.load(out)
            {
                "gen-data": cmd_gen_data,
                "train-target": cmd_train_target,
                "extract-features": cmd_extract_features,
                "train-auditor": cmd_train_auditor,
                "evaluate": cmd_evaluate,
                "sweep": lambda c, i: cmd_sweep(c, i, args.jobs),
            }[args.command](cfg, index)
        return EXIT_OK
    except (UsageError, DependencyError) as exc:
        print(f"gmint: error: {exc}", file=sys.stderr)
        return exc.code
    except FloatingPointError as exc:
        print(f"gmint: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"gmint: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    level = os.environ.get("GMINT_LOG", "warn").upper()
    level = {"WARN": "WARNING"}.get(level, level)
    if level not in ("ERROR", "WARNING", "INFO", "DEBUG"):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    sys.exit(run())


if __name__ == "__main__":
    main()
