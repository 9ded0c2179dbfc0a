"""Small text classifiers that play the audited model.

Parameter order (and therefore "first k" / "last k" selection) per kind:

logreg
    layer00.dense.weight [V, C], layer00.dense.bias [C]
mlp
    layer00.embedding [V, E], layer01.dense.weight [E, H], layer01.dense.bias [H],
    layer02.output.weight [H, C], layer02.output.bias [C]
tiny_transformer
    layer00.embedding [V, E], layer01.position [L, E],
    layer02.attention.{query,key,value,output} [E, E],
    layer03.norm.{gamma,beta} [E], layer04.dense.{weight,bias} [E, H] / [H],
    layer05.output.{weight,bias} [H, C] / [C]
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .autodiff import AdamState, ParameterSet, Tape, adam_step, glorot_uniform, ops
from .seeding import rng_for
from .text import PAD, Vocabulary, tokenize_many

log = logging.getLogger(__name__)

KINDS = ("logreg", "mlp", "tiny_transformer")


class TrainingError(FloatingPointError):
    pass


@dataclass
class AuditedModelSpec:
    kind: str = "mlp"
    vocab_size: int = 200
    max_len: int = 16
    embed_dim: int = 16
    hidden_dim: int = 32
    num_heads: int = 2
    num_classes: int = 2
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        for key in ("vocab_size", "max_len", "embed_dim", "hidden_dim", "num_heads", "num_classes"):
            if getattr(self, key) < 1:
                raise ValueError(f"{key} must be positive")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if self.kind == "tiny_transformer" and self.embed_dim % self.num_heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 512
    learning_rate: float = 1e-3
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class AuditedModel:
    spec: AuditedModelSpec
    params: ParameterSet
    vocab: Optional[Vocabulary] = None
    training_config: Optional[TrainConfig] = None
    train_history: list = field(default_factory=list)

    # inputs

    def encode(self, samples) -> np.ndarray:
        if self.vocab is None:
            raise ValueError("model has no vocabulary attached")
        ids = tokenize_many(samples, self.vocab, self.spec.max_len)
        if ids.size and ids.max() >= self.spec.vocab_size:
            raise ValueError("vocabulary is larger than the model's vocab_size")
        return ids

    # forward

    def logits(self, tape: Tape, p: dict, ids: np.ndarray):
        """Return ``(logits, penultimate)`` tensors for a ``[B, L]`` id batch."""
        ids = np.asarray(ids)
        if ids.ndim != 2 or ids.shape[1] != self.spec.max_len:
            raise ValueError(f"expected [batch, {self.spec.max_len}] token ids, got {ids.shape}")
        return _FORWARD[self.spec.kind](self.spec, tape, p, ids)

    def predict_proba(self, ids: np.ndarray) -> np.ndarray:
        tape = Tape()
        logits, _ = self.logits(tape, tape.watch(self.params), ids)
        return ops.softmax(logits).value

    def predict(self, ids: np.ndarray) -> np.ndarray:
        # argmax returns the first maximum, i.e. ties go to the lowest class index
        return np.argmax(self.predict_proba(ids), axis=1)

    def loss_and_grads(self, ids: np.ndarray, labels: np.ndarray):
        """Mean cross-entropy over the batch and its GradientMap.

        A batch of one is the per-sample gradient used by the probe; training
        uses the same call on full batches (mean of per-sample gradients).
        """
        tape = Tape()
        logits, _ = self.logits(tape, tape.watch(self.params), ids)
        loss = ops.categorical_cross_entropy(logits, labels, from_logits=True)
        return tape.backward(loss)

    def penultimate(self, ids: np.ndarray) -> np.ndarray:
        tape = Tape()
        _, pen = self.logits(tape, tape.watch(self.params), ids)
        return pen.value

    # persistence

    def save(self, directory) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        wpath = directory / "params.gmwt"
        self.params.save(wpath)
        meta = {
            "spec": asdict(self.spec),
            "training_config": asdict(self.training_config) if self.training_config else None,
            "train_history": self.train_history,
            "vocab": self.vocab.to_json() if self.vocab else None,
        }
        mpath = directory / "model.json"
        mpath.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return wpath, mpath

    @classmethod
    def load(cls, directory) -> "AuditedModel":
        directory = Path(directory)
        meta = json.loads((directory / "model.json").read_text())
        params = ParameterSet.load(directory / "params.gmwt")
        return cls(
            AuditedModelSpec(**meta["spec"]),
            params,
            Vocabulary.from_json(meta["vocab"]) if meta["vocab"] else None,
            TrainConfig(**meta["training_config"]) if meta["training_config"] else None,
            meta["train_history"],
        )


def _dense(tape, x, w, b):
    return ops.add(ops.matmul(x, w), b)


def _bag_of_words(ids: np.ndarray, vocab_size: int) -> np.ndarray:
    counts = np.zeros((ids.shape[0], vocab_size))
    rows = np.repeat(np.arange(ids.shape[0]), ids.shape[1])
    np.add.at(counts, (rows, ids.reshape(-1)), 1.0)
    counts[:, PAD] = 0.0
    return counts


def _forward_logreg(spec, tape, p, ids):
    x = tape.constant(_bag_of_words(ids, spec.vocab_size))
    logits = _dense(tape, x, p["layer00.dense.weight"], p["layer00.dense.bias"])
    return logits, logits


def _forward_mlp(spec, tape, p, ids):
    mask = ids != PAD
    pooled = ops.mean_pool(ops.embedding_lookup(p["layer00.embedding"], ids), mask)
    hidden = ops.relu(_dense(tape, pooled, p["layer01.dense.weight"], p["layer01.dense.bias"]))
    return _dense(tape, hidden, p["layer02.output.weight"], p["layer02.output.bias"]), hidden


def _forward_transformer(spec, tape, p, ids):
    mask = ids != PAD
    x = ops.add(ops.embedding_lookup(p["layer00.embedding"], ids), p["layer01.position"])
    q = ops.matmul(x, p["layer02.attention.query"])
    k = ops.matmul(x, p["layer02.attention.key"])
    v = ops.matmul(x, p["layer02.attention.value"])
    att = ops.scaled_dot_attention(q, k, v, num_heads=spec.num_heads, key_mask=mask)
    h = ops.layer_norm(ops.add(x, ops.matmul(att, p["layer02.attention.output"])), p["layer03.norm.gamma"], p["layer03.norm.beta"])
    pooled = ops.mean_pool(h, mask)
    hidden = ops.relu(_dense(tape, pooled, p["layer04.dense.weight"], p["layer04.dense.bias"]))
    return _dense(tape, hidden, p["layer05.output.weight"], p["layer05.output.bias"]), hidden


_FORWARD = {"logreg": _forward_logreg, "mlp": _forward_mlp, "tiny_transformer": _forward_transformer}


def build_model(spec: AuditedModelSpec, vocab: Optional[Vocabulary] = None) -> AuditedModel:
    spec.validate()
    if vocab is not None and len(vocab) > spec.vocab_size:
        raise ValueError(f"vocabulary has {len(vocab)} tokens but vocab_size is {spec.vocab_size}")
    rng = rng_for(spec.seed, "init")
    V, L, E, H, C = spec.vocab_size, spec.max_len, spec.embed_dim, spec.hidden_dim, spec.num_classes
    p = ParameterSet()

    def dense(name, n_in, n_out):
        p.add(f"{name}.weight", glorot_uniform(rng, n_in, n_out, (n_in, n_out)))
        p.add(f"{name}.bias", np.zeros(n_out))

    if spec.kind == "logreg":
        dense("layer00.dense", V, C)
    elif spec.kind == "mlp":
        p.add("layer00.embedding", glorot_uniform(rng, V, E, (V, E)))
        dense("layer01.dense", E, H)
        dense("layer02.output", H, C)
    else:
        p.add("layer00.embedding", glorot_uniform(rng, V, E, (V, E)))
        p.add("layer01.position", glorot_uniform(rng, L, E, (L, E)))
        for part in ("query", "key", "value", "output"):
            p.add(f"layer02.attention.{part}", glorot_uniform(rng, E, E, (E, E)))
        p.add("layer03.norm.gamma", np.ones(E))
        p.add("layer03.norm.beta", np.zeros(E))
        dense("layer04.dense", E, H)
        dense("layer05.output", H, C)
    return AuditedModel(spec, p, vocab)


def train_audited(model: AuditedModel, ids: np.ndarray, labels: np.ndarray, config: TrainConfig) -> AuditedModel:
    """Mini-batch Adam on mean cross-entropy; returns a new trained model."""
    config.validate()
    ids = np.asarray(ids)
    labels = np.asarray(labels)
    n = len(labels)
    if n == 0:
        raise ValueError("training set is empty")
    if labels.min() < 0 or labels.max() >= model.spec.num_classes:
        raise ValueError("label outside [0, num_classes)")
    batch = min(config.batch_size, n)
    rng = rng_for(config.seed, "train-audited")
    params = model.params
    state = AdamState.zeros_like(params, learning_rate=config.learning_rate)
    work = AuditedModel(model.spec, params, model.vocab)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, batch)):
            idx = order[start : start + batch]
            grads = work.loss_and_grads(ids[idx], labels[idx])
            if not np.isfinite(grads.loss_value):
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, batch {b + 1}")
            total += grads.loss_value * len(idx)
            try:
                params, state = adam_step(params, grads, state)
            except FloatingPointError as exc:
                raise TrainingError(f"epoch {epoch + 1}, batch {b + 1}: {exc}") from None
            work.params = params
        acc = evaluate_accuracy(work, ids, labels)
        history.append({"epoch": epoch + 1, "loss": total / n, "accuracy": acc})
        log.debug("audited epoch %d loss %.4f acc %.4f", epoch + 1, total / n, acc)
    return AuditedModel(model.spec, params, model.vocab, config, history)


def evaluate_accuracy(model: AuditedModel, ids: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("cannot evaluate accuracy on an empty set")
    correct = 0
    for start in range(0, len(labels), 1024):
        correct += int((model.predict(ids[start : start + 1024]) == labels[start : start + 1024]).sum())
    return correct / len(labels)
