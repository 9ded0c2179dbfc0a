"""Named parameter collections, gradient maps and the GMWT weight file."""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

MAGIC = b"GMWT"
VERSION = 1


@dataclass(frozen=True)
class Entry:
    name: str
    value: np.ndarray
    trainable: bool = True


class ParameterSet:
    """Ordered list of named float64 tensors.

    Order is significant: it is the forward order of the model and defines the
    "first k" / "last k" layer selections used by the gradient probe.
    """

    def __init__(self, entries: Iterable[Entry] = ()):
        self.entries: list[Entry] = []
        self._index: dict[str, int] = {}
        for e in entries:
            self.add(e.name, e.value, e.trainable)

    def add(self, name: str, value, trainable: bool = True, copy: bool = True) -> None:
        if name in self._index:
            raise ValueError(f"duplicate layer name {name!r}")
        arr = np.array(value, dtype=np.float64) if copy else np.asarray(value, dtype=np.float64)
        if arr.ndim == 0 or any(d <= 0 for d in arr.shape):
            raise ValueError(f"{name}: tensor dims must be positive, got {arr.shape}")
        arr.setflags(write=False)
        self._index[name] = len(self.entries)
        self.entries.append(Entry(name, arr, bool(trainable)))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Entry]:
        return iter(self.entries)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __getitem__(self, name: str) -> np.ndarray:
        return self.entries[self._index[name]].value

    def names(self, trainable_only: bool = False) -> list[str]:
        return [e.name for e in self.entries if e.trainable or not trainable_only]

    def shapes(self) -> list[tuple]:
        return [e.value.shape for e in self.entries]

    def num_parameters(self, trainable_only: bool = False) -> int:
        return sum(e.value.size for e in self.entries if e.trainable or not trainable_only)

    def replace(self, updates: dict) -> "ParameterSet":
        """New set with some tensors swapped out; order and flags are kept.

        Replacement arrays are adopted without copying and marked read-only.
        """
        out = ParameterSet()
        for e in self.entries:
            value = updates.get(e.name, e.value)
            if value.shape != e.value.shape:
                raise ValueError(f"{e.name}: shape {value.shape} != {e.value.shape}")
            out.add(e.name, value, e.trainable, copy=False)
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParameterSet):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<IQ", VERSION, len(self.entries)))
        for e in self.entries:
            name = e.name.encode("utf-8")
            buf.write(struct.pack("<I", len(name)))
            buf.write(name)
            buf.write(struct.pack("<BI", int(e.trainable), e.value.ndim))
            buf.write(struct.pack(f"<{e.value.ndim}Q", *e.value.shape))
            buf.write(np.ascontiguousarray(e.value, dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ParameterSet":
        view = memoryview(raw)
        if bytes(view[:4]) != MAGIC:
            raise ValueError("not a GMWT parameter file (bad magic)")
        version, count = struct.unpack_from("<IQ", view, 4)
        if version != VERSION:
            raise ValueError(f"unsupported GMWT version {version}")
        pos = 16
        out = cls()
        for _ in range(count):
            (n,) = struct.unpack_from("<I", view, pos)
            pos += 4
            name = bytes(view[pos : pos + n]).decode("utf-8")
            pos += n
            trainable, rank = struct.unpack_from("<BI", view, pos)
            pos += 5
            dims = struct.unpack_from(f"<{rank}Q", view, pos)
            pos += 8 * rank
            size = int(np.prod(dims))
            values = np.frombuffer(view[pos : pos + 8 * size], dtype="<f8").reshape(dims)
            pos += 8 * size
            out.add(name, values, bool(trainable))
        if pos != len(raw):
            raise ValueError(f"trailing bytes in GMWT file ({len(raw) - pos})")
        return out

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ParameterSet":
        return cls.from_bytes(Path(path).read_bytes())

    def fingerprint(self) -> bytes:
        """SHA-256 of the serialized set (32 bytes)."""
        return hashlib.sha256(self.to_bytes()).digest()

    def __repr__(self) -> str:
        body = ", ".join(f"{e.name}{list(e.value.shape)}" for e in self.entries)
        return f"ParameterSet({body})"


@dataclass
class GradientMap:
    grads: dict
    loss_value: float

    def __getitem__(self, name: str) -> np.ndarray:
        return self.grads[name]

    def __contains__(self, name: str) -> bool:
        return name in self.grads

    def names(self) -> list[str]:
        return list(self.grads)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)
