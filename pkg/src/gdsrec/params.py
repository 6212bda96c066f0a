"""Named parameter tensors, optimizers, and checkpoint serialization.

Checkpoints are a flat little-endian float64 blob plus a JSON manifest
listing (name, shape, byte offset) per tensor; the manifest carries a
mandatory format version.
"""

from __future__ import annotations

import json
import zlib
from pathlib import Path

import numpy as np

from .autodiff import Tensor

CHECKPOINT_VERSION = 1


class ParamStore:
    """Ordered mapping of unique names to trainable tensors."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, array) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.array(array, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def add_uniform(self, name: str, shape, bound: float, seed: int) -> Tensor:
        """Add a tensor drawn from U(-bound, bound).

        Each tensor gets its own stream keyed by (seed, crc32(name)), so
        adding or resizing one table never shifts the draws of another.
        """
        rng = np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))
        return self.add(name, rng.uniform(-bound, bound, size=shape))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def tensors(self):
        return list(self._params.values())

    def items(self):
        return self._params.items()

    def zero_grad(self):
        for t in self._params.values():
            t.zero_grad()

    def num_values(self) -> int:
        return sum(t.size for t in self._params.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def restore(self, snap: dict[str, np.ndarray]):
        if set(snap) != set(self._params):
            raise ValueError("snapshot does not match parameter names")
        for name, arr in snap.items():
            t = self._params[name]
            if t.data.shape != arr.shape:
                raise ValueError(f"snapshot shape mismatch for {name}")
            t.data[...] = arr

    # -- checkpoint blob + manifest -----------------------------------------

    def save(self, path) -> None:
        """Write ``<path>.bin`` (raw float64 data) and ``<path>.json``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        entries = []
        offset = 0
        chunks = []
        for name, t in self._params.items():
            raw = np.ascontiguousarray(t.data, dtype="<f8").tobytes()
            entries.append({"name": name, "shape": list(t.data.shape), "offset": offset})
            offset += len(raw)
            chunks.append(raw)
        manifest = {"version": CHECKPOINT_VERSION, "total_bytes": offset, "tensors": entries}
        path.with_suffix(".bin").write_bytes(b"".join(chunks))
        path.with_suffix(".json").write_text(json.dumps(manifest, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ParamStore":
        path = Path(path)
        manifest = json.loads(path.with_suffix(".json").read_text())
        if "version" not in manifest:
            raise ValueError("checkpoint manifest is missing the version field")
        if manifest["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {manifest['version']}")
        blob = path.with_suffix(".bin").read_bytes()
        if len(blob) != manifest["total_bytes"]:
            raise ValueError("checkpoint blob size does not match manifest")
        store = cls()
        for entry in manifest["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            start = entry["offset"]
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=start).reshape(shape)
            store.add(entry["name"], arr.astype(np.float64))
        return store


class Sgd:
    """Plain stochastic gradient descent."""

    def __init__(self, store: ParamStore, lr: float):
        self.store = store
        self.lr = float(lr)

    def step(self):
        for t in self.store.tensors():
            if t.grad is not None:
                t.data -= self.lr * t.grad


class Adam:
    """Adaptive-moment estimation with bias correction."""

    def __init__(self, store: ParamStore, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(t.data) for name, t in store.items()}
        self._v = {name: np.zeros_like(t.data) for name, t in store.items()}

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, t in self.store.items():
            if t.grad is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * t.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * (t.grad * t.grad)
            t.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def make_optimizer(name: str, store: ParamStore, lr: float):
    if name == "adam":
        return Adam(store, lr)
    if name == "sgd":
        return Sgd(store, lr)
    raise ValueError(f"unknown optimizer: {name}")
