"""Per-sample feature extraction from a frozen audited model, and the GMNT feature file."""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .models import AuditedModel
from .seeding import rng_for
from .text import stratified_partition

MAGIC = b"GMNT"
VERSION = 1
FEATURE_KINDS = ("gradient", "embedding")
STD_FLOOR = 1e-12


@dataclass(frozen=True)
class LayerSelector:
    mode: str = "first_k"
    k: int = 2
    names: tuple = ()

    def __post_init__(self):
        if self.mode not in ("first_k", "last_k", "named"):
            raise ValueError(f"unknown selector mode {self.mode!r}")
        if self.mode == "named":
            if not self.names:
                raise ValueError("named selector needs at least one layer name")
        elif self.k < 1:
            raise ValueError("selector k must be positive")

    @classmethod
    def parse(cls, text: str) -> "LayerSelector":
        """``first:K``, ``last:K`` or ``names:a,b``."""
        kind, _, arg = text.partition(":")
        if kind in ("first", "last"):
            try:
                return cls(f"{kind}_k", int(arg))
            except ValueError:
                raise ValueError(f"bad selector {text!r}: K must be a positive integer") from None
        if kind == "names":
            return cls("named", 0, tuple(n for n in arg.split(",") if n))
        raise ValueError(f"bad selector {text!r}; expected first:K, last:K or names:a,b")

    def __str__(self) -> str:
        if self.mode == "named":
            return "names:" + ",".join(self.names)
        return f"{self.mode[:-2]}:{self.k}"

    def resolve(self, params) -> list:
        """Selected trainable layer names, in model order."""
        trainable = params.names(trainable_only=True)
        if self.mode == "named":
            missing = [n for n in self.names if n not in trainable]
            if missing:
                raise KeyError(f"selector names missing trainable layers: {missing}")
            wanted = set(self.names)
            return [n for n in trainable if n in wanted]
        if self.k > len(trainable):
            raise KeyError(f"selector {self} needs {self.k} layers; model has {len(trainable)}")
        return trainable[: self.k] if self.mode == "first_k" else trainable[-self.k :]

    def to_json(self) -> dict:
        return {"k": self.k, "mode": self.mode, "names": list(self.names)}

    @classmethod
    def from_json(cls, obj: dict) -> "LayerSelector":
        return cls(obj["mode"], obj.get("k", 0), tuple(obj.get("names", ())))


@dataclass
class GradientFeature:
    sample_id: str
    feature: np.ndarray
    membership_label: int = 0
    source_corpus: str = ""


def _one(model: AuditedModel, sample) -> np.ndarray:
    return model.encode([sample])


def gradient_from_ids(model: AuditedModel, ids: np.ndarray, label: int, layers: list) -> np.ndarray:
    grads = model.loss_and_grads(ids, np.array([label]))
    parts = [grads[name].reshape(-1) for name in layers]
    feature = np.concatenate(parts)
    if not np.all(np.isfinite(feature)):
        raise FloatingPointError("non-finite per-sample gradient")
    return feature


def per_sample_gradient(
    model: AuditedModel, sample, selector: LayerSelector, membership_label: int = 0, source_corpus: str = ""
) -> GradientFeature:
    """Gradient of the loss against the sample's own label, selected layers flattened in order."""
    layers = selector.resolve(model.params)
    feature = gradient_from_ids(model, _one(model, sample), sample.label, layers)
    return GradientFeature(sample.id, feature, membership_label, source_corpus)


def embedding_feature(model: AuditedModel, sample, membership_label: int = 0, source_corpus: str = "") -> GradientFeature:
    """The activation fed to the final classification layer."""
    feature = model.penultimate(_one(model, sample))[0].copy()
    if not np.all(np.isfinite(feature)):
        raise FloatingPointError("non-finite embedding feature")
    return GradientFeature(sample.id, feature, membership_label, source_corpus)


def extract(model: AuditedModel, samples, feature_kind: str, selector: LayerSelector) -> np.ndarray:
    """Feature matrix for ``samples`` (row order preserved)."""
    if feature_kind not in FEATURE_KINDS:
        raise ValueError(f"unknown feature kind {feature_kind!r}")
    if feature_kind == "embedding":
        return model.penultimate(model.encode(samples)) if samples else np.zeros((0, 0))
    layers = selector.resolve(model.params)
    ids = model.encode(samples)
    return np.stack([gradient_from_ids(model, ids[i : i + 1], s.label, layers) for i, s in enumerate(samples)])


@dataclass
class MintDataset:
    sample_ids: list
    features: np.ndarray
    labels: np.ndarray
    sources: list
    train_idx: np.ndarray
    test_idx: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    model_fingerprint: bytes
    selector: LayerSelector
    feature_kind: str = "gradient"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if set(np.unique(self.labels).tolist()) != {0, 1}:
            raise ValueError("MINT dataset needs both membership labels (0 and 1)")

    def __len__(self) -> int:
        return len(self.sample_ids)

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    @property
    def counts(self) -> dict:
        return {"member": int(self.labels.sum()), "external": int((1 - self.labels).sum())}

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def train_view(self):
        return self.normalize(self.features[self.train_idx]), self.labels[self.train_idx]

    def test_view(self):
        return self.normalize(self.features[self.test_idx]), self.labels[self.test_idx]

    def with_labels(self, labels: np.ndarray, seed: int = 0, test_ratio: float = 0.35) -> "MintDataset":
        """Same rows with new membership labels; MINT split and scaling are refit."""
        return assemble(
            self.sample_ids, self.features, labels, self.sources, self.model_fingerprint,
            self.selector, self.feature_kind, seed, test_ratio, shuffle=False,
        )


def fit_standardization(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    # zero-variance columns are centred but left unscaled
    std = np.where(std > STD_FLOOR, std, 1.0)
    return mean, std


def assemble(sample_ids, features, labels, sources, fingerprint, selector, feature_kind, seed, test_ratio=0.35, shuffle=True):
    """Shuffle rows, split 65/35 stratified on membership, fit scaling on the train part."""
    labels = np.asarray(labels, dtype=np.int64)
    features = np.asarray(features, dtype=np.float64)
    if shuffle:
        order = rng_for(seed, "mint-rows").permutation(len(sample_ids))
        sample_ids = [sample_ids[i] for i in order]
        sources = [sources[i] for i in order]
        features, labels = features[order], labels[order]
    if set(np.unique(labels).tolist()) != {0, 1}:
        raise ValueError("MINT dataset needs both membership labels (0 and 1)")
    train_idx, test_idx = stratified_partition(labels, 1.0 - test_ratio, rng_for(seed, "mint-split"))
    mean, std = fit_standardization(features[train_idx])
    return MintDataset(
        list(sample_ids), features, labels, list(sources), train_idx, test_idx, mean, std,
        fingerprint, selector, feature_kind,
    )


def build_mint_dataset(
    model: AuditedModel,
    d_samples,
    e_samples,
    selector: LayerSelector,
    feature_kind: str = "gradient",
    seed: int = 0,
    member_ids=None,
    test_ratio: float = 0.35,
) -> MintDataset:
    """Features for members (label 1) and externals (label 0).

    ``e_samples`` may carry ``(sample, source_corpus)`` pairs; bare samples are
    tagged with the model's own corpus name ``""``.
    """
    if not d_samples or not e_samples:
        raise ValueError("both D and E subsets must be non-empty")
    d_pairs = [s if isinstance(s, tuple) else (s, "") for s in d_samples]
    e_pairs = [s if isinstance(s, tuple) else (s, "") for s in e_samples]
    d_ids = {s.id for s, _ in d_pairs}
    e_ids = {s.id for s, _ in e_pairs}
    overlap = d_ids & e_ids
    if overlap:
        raise ValueError(f"D and E subsets overlap on {len(overlap)} sample(s), e.g. {sorted(overlap)[0]!r}")
    if member_ids is not None:
        outside = d_ids - set(member_ids)
        if outside:
            raise ValueError(f"{len(outside)} D sample(s) were not in the audited model's training set")
        leaked = e_ids & set(member_ids)
        if leaked:
            raise ValueError(f"{len(leaked)} E sample(s) were in the audited model's training set")

    rows = sorted([(s, src, 1) for s, src in d_pairs] + [(s, src, 0) for s, src in e_pairs], key=lambda r: r[0].id)
    samples = [r[0] for r in rows]
    features = extract(model, samples, feature_kind, selector)
    return assemble(
        [s.id for s in samples], features, [r[2] for r in rows], [r[1] for r in rows],
        model.params.fingerprint(), selector, feature_kind, seed, test_ratio,
    )


# feature file


def write_features(path, dataset: MintDataset) -> Path:
    """GMNT file: rows in dataset order, payload as little-endian f32."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.BytesIO()
    buf.write(MAGIC)
    n, d = dataset.features.shape
    buf.write(struct.pack("<IBQQ", VERSION, FEATURE_KINDS.index(dataset.feature_kind), n, d))
    desc = json.dumps(dataset.selector.to_json(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf.write(struct.pack("<I", len(desc)))
    buf.write(desc)
    if len(dataset.model_fingerprint) != 32:
        raise ValueError("model fingerprint must be 32 bytes")
    buf.write(dataset.model_fingerprint)
    payload = dataset.features.astype("<f4")
    for i, sid in enumerate(dataset.sample_ids):
        raw = sid.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", int(dataset.labels[i])))
        buf.write(payload[i].tobytes())
    path.write_bytes(buf.getvalue())
    return path


@dataclass
class FeatureFile:
    feature_kind: str
    selector: LayerSelector
    model_fingerprint: bytes
    sample_ids: list
    labels: np.ndarray
    features: np.ndarray


def read_features(path) -> FeatureFile:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a GMNT feature file (bad magic)")
    version, kind, n, d = struct.unpack_from("<IBQQ", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported GMNT version {version}")
    pos = 4 + struct.calcsize("<IBQQ")
    (dlen,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    selector = LayerSelector.from_json(json.loads(raw[pos : pos + dlen].decode("utf-8")))
    pos += dlen
    fingerprint = raw[pos : pos + 32]
    pos += 32
    ids, labels = [], np.zeros(n, dtype=np.int64)
    features = np.zeros((n, d))
    for i in range(n):
        (slen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        ids.append(raw[pos : pos + slen].decode("utf-8"))
        pos += slen
        labels[i] = raw[pos]
        pos += 1
        features[i] = np.frombuffer(raw, dtype="<f4", count=d, offset=pos)
        pos += 4 * d
    if pos != len(raw):
        raise ValueError(f"{path}: trailing bytes in feature file")
    return FeatureFile(FEATURE_KINDS[kind], selector, fingerprint, ids, labels, features)
