"""Corpora: ingestion, tokenization, stratified splitting and synthetic generation."""

from __future__ import annotations

import csv
import json
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .seeding import rng_for

PAD, UNK = 0, 1
_TOKEN = re.compile(r"\w+")


class ParseError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Sample:
    id: str
    text: str
    label: int


@dataclass
class Corpus:
    name: str
    samples: list
    num_classes: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.samples:
            raise ValueError(f"corpus {self.name!r} is empty")
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError(f"corpus {self.name!r} has duplicate sample ids")
        seen = {s.label for s in self.samples}
        if not seen <= set(range(self.num_classes)):
            raise ValueError(f"corpus {self.name!r} has labels outside [0, {self.num_classes})")
        if len(seen) != self.num_classes:
            missing = sorted(set(range(self.num_classes)) - seen)
            raise ValueError(f"corpus {self.name!r}: classes {missing} have no samples")
        self._by_id = {s.id: s for s in self.samples}

    def __len__(self) -> int:
        return len(self.samples)

    def get(self, sample_id: str) -> Sample:
        return self._by_id[sample_id]

    def subset(self, ids) -> list:
        return [self._by_id[i] for i in ids]


def _remap_labels(raw: list, path, lines: list) -> tuple[list, list]:
    kinds = {type(r) for r in raw}
    if kinds <= {int}:
        names = sorted(set(raw))
    elif kinds <= {str}:
        names = sorted(set(raw))
    else:
        bad = next(i for i, r in enumerate(raw) if type(r) is not type(raw[0]))
        raise ParseError(path, lines[bad], "labels mix strings and integers")
    index = {name: i for i, name in enumerate(names)}
    return [index[r] for r in raw], names


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def ingest(path, format: Optional[str] = None, name: Optional[str] = None) -> Corpus:
    """Read a ``text,label`` CSV or a JSONL corpus.

    Labels are remapped to contiguous indices in sorted order of the raw
    labels; the raw labels are kept in ``metadata["labels"]``. An optional
    ``id`` column/field supplies sample ids, otherwise ``<name>:<line>`` is used.
    A ``<file>.meta.json`` sidecar written by :func:`export` restores the
    original name and label names.
    """
    path = Path(path)
    fmt = format or path.suffix.lstrip(".").lower()
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"unknown corpus format {fmt!r} (expected csv or jsonl)")
    meta = json.loads(_sidecar(path).read_text()) if _sidecar(path).exists() else {}
    name = name or meta.get("name") or path.stem

    ids, texts, raw, lines = [], [], [], []
    if fmt == "csv":
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            cols = reader.fieldnames or []
            for col in ("text", "label"):
                if col not in cols:
                    raise ParseError(path, 1, f"missing column {col!r}")
            for row in reader:
                line = reader.line_num
                if not (row.get("text") or "").strip():
                    raise ParseError(path, line, "empty text field")
                if row.get("label") in (None, ""):
                    raise ParseError(path, line, "empty label field")
                ids.append(row.get("id") or f"{name}:{line}")
                texts.append(row["text"])
                raw.append(row["label"])
                lines.append(line)
    else:
        with path.open(encoding="utf-8") as fh:
            for line, rawline in enumerate(fh, start=1):
                if not rawline.strip():
                    continue
                try:
                    obj = json.loads(rawline)
                except json.JSONDecodeError as exc:
                    raise ParseError(path, line, f"invalid JSON ({exc.msg})") from None
                if not isinstance(obj, dict):
                    raise ParseError(path, line, "expected a JSON object")
                for key in ("text", "label"):
                    if key not in obj:
                        raise ParseError(path, line, f"missing field {key!r}")
                if not isinstance(obj["text"], str) or not obj["text"].strip():
                    raise ParseError(path, line, "field 'text' must be a non-empty string")
                label = obj["label"]
                if isinstance(label, bool) or not isinstance(label, (str, int)):
                    raise ParseError(path, line, f"unknown label type {type(label).__name__}")
                ids.append(str(obj.get("id", f"{name}:{line}")))
                texts.append(obj["text"])
                raw.append(label)
                lines.append(line)
    if not texts:
        raise ParseError(path, 1, "no samples in file")

    if "labels" in meta and all(isinstance(r, int) for r in raw):
        labels, names = raw, meta["labels"]
    else:
        labels, names = _remap_labels(raw, path, lines)
    metadata = {k: v for k, v in meta.items() if k not in ("name", "num_classes", "labels")}
    metadata.update(source=str(path.name), labels=names)
    samples = [Sample(i, t, y) for i, t, y in zip(ids, texts, labels)]
    return Corpus(name, samples, meta.get("num_classes", len(names)), metadata)


def export(corpus: Corpus, path) -> Path:
    """Write ``path`` (JSONL) plus the ``path.meta.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for s in corpus.samples:
            fh.write(json.dumps({"id": s.id, "text": s.text, "label": s.label}, ensure_ascii=False) + "\n")
    meta = {"name": corpus.name, "num_classes": corpus.num_classes}
    meta.update(corpus.metadata)
    meta.setdefault("labels", list(range(corpus.num_classes)))
    meta.pop("source", None)
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def words(text: str) -> list:
    return _TOKEN.findall(text.lower())


@dataclass
class Vocabulary:
    token_to_id: dict
    max_size: int

    def __len__(self) -> int:
        return len(self.token_to_id)

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def to_json(self) -> dict:
        tokens = sorted(self.token_to_id, key=self.token_to_id.get)
        return {"max_size": self.max_size, "tokens": tokens}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        return cls({t: i for i, t in enumerate(obj["tokens"])}, obj["max_size"])


def build_vocab(samples, max_size: int) -> Vocabulary:
    """Most frequent lowercased tokens, ties broken lexicographically.

    ``samples`` is a Corpus or an iterable of Samples / strings.
    """
    if max_size < 3:
        raise ValueError("max_size must be at least 3 (PAD, UNK and one token)")
    items = samples.samples if isinstance(samples, Corpus) else samples
    counts = Counter()
    for s in items:
        counts.update(words(s if isinstance(s, str) else s.text))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    mapping = {"<pad>": PAD, "<unk>": UNK}
    for tok, _ in ranked[: max_size - 2]:
        mapping[tok] = len(mapping)
    return Vocabulary(mapping, max_size)


def tokenize(text: str, vocab: Vocabulary, max_len: int) -> np.ndarray:
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ids = [vocab.id(w) for w in words(text)[:max_len]]
    out = np.full(max_len, PAD, dtype=np.int64)
    out[: len(ids)] = ids
    return out


def tokenize_many(samples, vocab: Vocabulary, max_len: int) -> np.ndarray:
    out = np.full((len(samples), max_len), PAD, dtype=np.int64)
    for i, s in enumerate(samples):
        out[i] = tokenize(s.text, vocab, max_len)
    return out


def stratified_partition(labels, ratio: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Shuffle-split indices so the first part has ``floor(ratio * N)`` rows.

    Each class contributes the floor or ceiling of its proportional share.
    """
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()))
    members = {c: np.flatnonzero(labels == c) for c in classes}
    want = {c: ratio * len(members[c]) for c in classes}
    take = {c: int(np.floor(want[c])) for c in classes}
    short = int(np.floor(ratio * len(labels))) - sum(take.values())
    # hand leftover slots to the largest fractional parts, lowest class first on ties
    for c in sorted(classes, key=lambda c: (-(want[c] - take[c]), c))[:short]:
        take[c] += 1
    first, second = [], []
    for c in classes:
        idx = members[c][rng.permutation(len(members[c]))]
        first.append(idx[: take[c]])
        second.append(idx[take[c] :])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


@dataclass
class CorpusSplit:
    train_D: list
    test: list
    ratio: float
    seed: int

    def to_json(self) -> dict:
        return asdict(self)


def split(corpus: Corpus, ratio: float = 0.65, seed: int = 0) -> CorpusSplit:
    """Stratified shuffle split; ``len(train_D) == floor(ratio * N)``."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    by_class: dict = {}
    for s in corpus.samples:
        by_class.setdefault(s.label, []).append(s.id)
    for c, ids in sorted(by_class.items()):
        if len(ids) < 2:
            raise ValueError(f"class {c} has {len(ids)} sample(s); cannot stratify")

    ids = sorted(s.id for s in corpus.samples)
    labels = [corpus.get(i).label for i in ids]
    train_idx, test_idx = stratified_partition(labels, ratio, rng_for(seed, "split"))
    train = [ids[i] for i in train_idx]
    test = [ids[i] for i in test_idx]
    return CorpusSplit(sorted(train), sorted(test), ratio, seed)


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 2
    samples_per_class: int = 100
    vocab_size: int = 200
    class_signal_strength: float = 0.5
    seed: int = 0
    min_length: int = 8
    max_length: int = 16
    word_prefix: str = "w"
    zipf_exponent: float = 1.1
    unique_tokens_per_sample: int = 0
    name: Optional[str] = None

    def validate(self) -> None:
        for key in ("num_classes", "samples_per_class", "vocab_size", "min_length", "max_length"):
            if getattr(self, key) < 1:
                raise ValueError(f"{key} must be positive")
        if self.unique_tokens_per_sample < 0:
            raise ValueError("unique_tokens_per_sample must be non-negative")
        if not 0.0 <= self.class_signal_strength <= 1.0:
            raise ValueError("class_signal_strength must lie in [0, 1]")
        if self.min_length > self.max_length:
            raise ValueError("min_length exceeds max_length")
        if self.vocab_size < self.num_classes:
            raise ValueError("vocab_size must be at least num_classes")


def synth_corpus(spec: SynthSpec) -> Corpus:
    """Labeled bag-of-words documents with tunable class signal.

    Tokens come from a mixture: with probability ``class_signal_strength``
    from the label's own block of the vocabulary (blocks are disjoint), else
    from a Zipf-shaped unigram distribution over the whole vocabulary.
    ``unique_tokens_per_sample`` appends that many words which occur in no
    other sample, the kind of idiosyncratic content a model can memorize.
    """
    spec.validate()
    rng = rng_for(spec.seed, "synth")
    vocab = [f"{spec.word_prefix}{i:05d}" for i in range(spec.vocab_size)]
    ranks = np.arange(1, spec.vocab_size + 1, dtype=np.float64)
    shared = ranks ** -spec.zipf_exponent
    shared /= shared.sum()
    shared = shared[rng.permutation(spec.vocab_size)]
    blocks = np.array_split(np.arange(spec.vocab_size), spec.num_classes)

    name = spec.name or f"synth-{spec.word_prefix}{spec.seed}"
    samples = []
    for i in range(spec.samples_per_class * spec.num_classes):
        label = i % spec.num_classes
        length = int(rng.integers(spec.min_length, spec.max_length + 1))
        from_class = rng.random(length) < spec.class_signal_strength
        shared_draw = rng.choice(spec.vocab_size, size=length, p=shared)
        class_draw = rng.choice(blocks[label], size=length)
        toks = np.where(from_class, class_draw, shared_draw)
        text = [vocab[t] for t in toks]
        text += [f"{spec.word_prefix}x{i:06d}{j}" for j in range(spec.unique_tokens_per_sample)]
        samples.append(Sample(f"{name}-{i:06d}", " ".join(text), label))
    meta = {"synthetic": asdict(spec), "labels": list(range(spec.num_classes))}
    return Corpus(name, samples, spec.num_classes, meta)
