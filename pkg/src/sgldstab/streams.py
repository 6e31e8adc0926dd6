"""Reproducible per-replica random streams.

Replica ``r`` of experiment ``experiment_id`` under ``seed`` always draws from the
Philox stream keyed by ``SeedSequence([seed, crc32(experiment_id), r])``.  Both
sides of a coupled pair read the same stream, so shared noise is structural.
Draws are taken in fixed-size chunks of steps; the chunk size is part of the
contract and must not change between runs that are meant to agree bitwise.
"""
from __future__ import annotations

import zlib

import numpy as np

CHUNK = 64


def stream_key(seed: int, experiment_id: str, replica: int) -> np.random.SeedSequence:
    tag = zlib.crc32(experiment_id.encode("utf-8"))
    return np.random.SeedSequence([int(seed) & (2**64 - 1), tag, int(replica)])


def make_generator(seed: int, experiment_id: str, replica: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(stream_key(seed, experiment_id, replica)))


class ReplicaStreams:
    """One generator per replica plus a chunked buffer of per-step draws.

    Each step consumes, per replica: ``n`` uniforms (mini-batch keys),
    ``substeps * d`` normals and ``substeps`` uniforms (meeting tests).
    """

    def __init__(self, seed: int, experiment_id: str, replicas: int):
        if replicas < 1:
            raise ValueError("replicas must be >= 1")
        self.replicas = replicas
        self.generators = [make_generator(seed, experiment_id, r) for r in range(replicas)]
        self._buf = None
        self._pos = 0
        self._shape = None

    @classmethod
    def from_generator(cls, rng: np.random.Generator) -> "ReplicaStreams":
        obj = cls.__new__(cls)
        obj.replicas = 1
        obj.generators = [rng]
        obj._buf = None
        obj._pos = 0
        obj._shape = None
        return obj

    def initial(self, d: int, x0, sigma0: float) -> np.ndarray:
        """Initial states ``x0 + sigma0 * N(0, I)`` drawn before any step."""
        x0 = np.broadcast_to(np.asarray(x0, dtype=float), (d,))
        if sigma0 == 0:
            return np.tile(x0, (self.replicas, 1))
        g = np.stack([gen.standard_normal(d) for gen in self.generators])
        return x0 + sigma0 * g

    def _refill(self, n: int, substeps: int, d: int):
        keys, xi, u = [], [], []
        for gen in self.generators:
            keys.append(gen.random((CHUNK, n)))
            xi.append(gen.standard_normal((CHUNK, substeps, d)))
            u.append(gen.random((CHUNK, substeps)))
        self._buf = (np.stack(keys, axis=1), np.stack(xi, axis=1), np.stack(u, axis=1))
        self._pos = 0

    def step(self, n: int, k: int, substeps: int, d: int, force: int | None = None):
        """Draws for one step: ``(batch (R, k), xi (R, substeps, d), u (R, substeps))``.

        ``force`` pins one index into every batch; the other ``k - 1`` members
        stay uniform over the remaining indices.
        """
        shape = (n, substeps, d)
        if self._shape not in (None, shape):
            raise ValueError("a stream buffer cannot change step layout mid-run")
        self._shape = shape
        if self._buf is None or self._pos == CHUNK:
            self._refill(n, substeps, d)
        keys, xi, u = (a[self._pos] for a in self._buf)
        self._pos += 1
        if force is not None:
            keys = keys.copy()
            keys[:, force] = -1.0
        return keys_to_batch(keys, k), xi, u


def keys_to_batch(keys: np.ndarray, k: int) -> np.ndarray:
    """Uniform size-k subsets from i.i.d. uniform keys (indices of the k smallest)."""
    n = keys.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"batch size k={k} must lie in [1, {n}]")
    if k == n:
        return np.broadcast_to(np.arange(n), keys.shape).copy()
    idx = np.argpartition(keys, k - 1, axis=-1)[..., :k]
    return np.sort(idx, axis=-1)
