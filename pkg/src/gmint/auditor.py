"""The MINT auditor: a dense membership classifier over per-sample features."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .autodiff import AdamState, ParameterSet, Tape, adam_step, glorot_uniform, ops
from .probe import MintDataset
from .seeding import rng_for

log = logging.getLogger(__name__)

_SCORE_EPS = 1e-15


@dataclass
class AuditorConfig:
    hidden_layers: tuple = (256, 128, 64)
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        self.hidden_layers = tuple(int(h) for h in self.hidden_layers)
        if not self.hidden_layers or any(h < 1 for h in self.hidden_layers):
            raise ValueError("hidden layer sizes must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class Prediction:
    sample_id: str
    score: float
    logit: float
    threshold: float = 0.5

    @property
    def predicted_member(self) -> bool:
        return self.score >= self.threshold


def _layer_names(n_hidden: int) -> list:
    names = [f"layer{i:02d}.dense" for i in range(n_hidden)]
    return names + [f"layer{n_hidden:02d}.output"]


def init_params(input_dim: int, config: AuditorConfig) -> ParameterSet:
    rng = rng_for(config.seed, "auditor-init")
    widths = [input_dim, *config.hidden_layers, 1]
    p = ParameterSet()
    for name, n_in, n_out in zip(_layer_names(len(config.hidden_layers)), widths[:-1], widths[1:]):
        p.add(f"{name}.weight", glorot_uniform(rng, n_in, n_out, (n_in, n_out)))
        p.add(f"{name}.bias", np.zeros(n_out))
    return p


@dataclass
class MintAuditor:
    config: AuditorConfig
    params: ParameterSet
    input_dim: int
    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None
    train_history: list = field(default_factory=list)

    def _logits(self, tape: Tape, p: dict, x: np.ndarray):
        names = _layer_names(len(self.config.hidden_layers))
        h = tape.constant(x)
        for name in names[:-1]:
            h = ops.relu(ops.add(ops.matmul(h, p[f"{name}.weight"]), p[f"{name}.bias"]))
        return ops.add(ops.matmul(h, p[f"{names[-1]}.weight"]), p[f"{names[-1]}.bias"])

    def logits(self, x: np.ndarray) -> np.ndarray:
        """Raw output logits for already-normalized rows."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise ValueError(f"feature length {x.shape[1]} != auditor input_dim {self.input_dim}")
        tape = Tape()
        return self._logits(tape, tape.watch(self.params), x).value[:, 0]

    def normalize(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise ValueError(f"feature length {x.shape[1]} != auditor input_dim {self.input_dim}")
        if self.mean is None:
            return x
        return (x - self.mean) / self.std

    def save(self, directory) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        wpath = directory / "params.gmwt"
        self.params.save(wpath)
        meta = {
            "config": asdict(self.config),
            "input_dim": self.input_dim,
            "normalization": None
            if self.mean is None
            else {"mean": self.mean.tolist(), "std": self.std.tolist()},
            "train_history": self.train_history,
        }
        mpath = directory / "auditor.json"
        mpath.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return wpath, mpath

    @classmethod
    def load(cls, directory) -> "MintAuditor":
        directory = Path(directory)
        meta = json.loads((directory / "auditor.json").read_text())
        norm = meta["normalization"]
        cfg = meta["config"]
        return cls(
            AuditorConfig(**cfg),
            ParameterSet.load(directory / "params.gmwt"),
            meta["input_dim"],
            None if norm is None else np.array(norm["mean"]),
            None if norm is None else np.array(norm["std"]),
            meta["train_history"],
        )


def train_mint(dataset: MintDataset, config: AuditorConfig) -> MintAuditor:
    """Train on the dataset's MINT-train rows with BCE and Adam; no early stopping."""
    x, y = dataset.train_view()
    if len(np.unique(y)) < 2:
        raise ValueError("MINT training portion contains a single membership class")
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite MINT features")
    xt, yt = dataset.test_view() if len(dataset.test_idx) else (None, None)
    auditor = MintAuditor(config, init_params(x.shape[1], config), x.shape[1], dataset.mean, dataset.std)
    state = AdamState.zeros_like(auditor.params, learning_rate=config.learning_rate)
    rng = rng_for(config.seed, "auditor-train")
    n = len(y)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            tape = Tape()
            logit = auditor._logits(tape, tape.watch(auditor.params), x[idx])
            grads = tape.backward(ops.binary_cross_entropy(logit, y[idx], from_logits=True))
            if not np.isfinite(grads.loss_value):
                raise FloatingPointError(f"non-finite auditor loss at epoch {epoch + 1}")
            total += grads.loss_value * len(idx)
            auditor.params, state = adam_step(auditor.params, grads, state)
        row = {"epoch": epoch + 1, "loss": total / n}
        if xt is not None:
            row["test_accuracy"] = float(np.mean((auditor.logits(xt) >= 0) == (yt == 1)))
        auditor.train_history.append(row)
        log.debug("auditor epoch %d loss %.4f", epoch + 1, row["loss"])
    return auditor


def score(auditor: MintAuditor, features) -> tuple[np.ndarray, np.ndarray]:
    """(scores, logits) for raw feature rows; normalization is applied here."""
    z = auditor.logits(auditor.normalize(features))
    s = np.empty_like(z)
    pos = z >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    s[~pos] = e / (1.0 + e)
    return np.clip(s, _SCORE_EPS, 1.0 - _SCORE_EPS), z


def predict_membership(auditor: MintAuditor, features, sample_ids=None, threshold: float = 0.5) -> list:
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if sample_ids is None:
        sample_ids = [str(i) for i in range(len(features))]
    scores, logits = score(auditor, features)
    return [Prediction(sid, float(s), float(z), threshold) for sid, s, z in zip(sample_ids, scores, logits)]
