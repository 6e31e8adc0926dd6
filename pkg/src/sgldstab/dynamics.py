"""SGLD kernels: the discrete update, the frozen-batch diffusion window and variants."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .core import DataSet, LossModel, batch_grad
from .streams import ReplicaStreams, keys_to_batch

__all__ = [
    "ChainState",
    "InitialSpec",
    "NoiseDraw",
    "SgldConfig",
    "continuous_window",
    "iterate_chain",
    "multistep_kernel",
    "multistep_substeps",
    "project_ball",
    "run_chain",
    "sample_minibatch",
    "sgld_step",
]

VARIANTS = ("plain", "projected", "anisotropic", "multistep")


@dataclass(frozen=True)
class ChainState:
    x: np.ndarray
    step_index: int = 0


@dataclass(frozen=True)
class NoiseDraw:
    """Gaussian draw ``xi`` (shape ``(d,)``) and the 0-based mini-batch indices."""

    xi: np.ndarray
    batch: np.ndarray


@dataclass(frozen=True)
class InitialSpec:
    """Point mass at ``x0`` (``sigma0 == 0``) or ``N(x0, sigma0^2 I)``."""

    x0: float | tuple = 0.0
    sigma0: float = 0.0

    def moment(self, d: int, p: int) -> float:
        """``E ||X0||^p`` for p in {1, 2, 4} (closed form for the point mass or x0 = 0)."""
        x0 = np.broadcast_to(np.asarray(self.x0, dtype=float), (d,))
        s2 = self.sigma0**2
        if s2 == 0:
            return float(np.linalg.norm(x0) ** p)
        a2 = float(x0 @ x0)
        if p == 2:
            return a2 + d * s2
        if p == 4:
            return a2**2 + 2 * (d + 2) * s2 * a2 + d * (d + 2) * s2**2
        if p == 1 and a2 == 0:
            return math.sqrt(2 * s2) * math.exp(math.lgamma((d + 1) / 2) - math.lgamma(d / 2))
        raise ValueError("first moment only in closed form for centred Gaussians")


@dataclass
class SgldConfig:
    eta: float
    beta: float
    k: int
    lam: float = 0.0
    variant: str = "plain"
    radius: float | None = None
    sigma: np.ndarray | None = None
    t_sub: int | None = None
    substeps_cts: int = 64
    _sqrt_sigma: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if not self.eta > 0 or not self.beta > 0:
            raise ValueError("eta and beta must be positive")
        if self.k < 1:
            raise ValueError("batch size must be >= 1")
        if self.lam < 0:
            raise ValueError("weight decay must be non-negative")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.substeps_cts < 1:
            raise ValueError("substeps_cts must be >= 1")
        if self.variant == "projected" and not (self.radius and self.radius > 0):
            raise ValueError("projected variant needs a positive radius")
        if self.variant == "multistep" and self.t_sub is not None and self.t_sub < 1:
            raise ValueError("t_sub must be >= 1")
        if self.variant == "anisotropic":
            self._sqrt_sigma = _psd_sqrt(self.sigma)

    def noise(self, xi: np.ndarray) -> np.ndarray:
        if self._sqrt_sigma is None:
            return xi
        return xi @ self._sqrt_sigma

    def finish(self, x: np.ndarray) -> np.ndarray:
        if self.variant == "projected":
            return project_ball(x, self.radius)
        return x

    def kernel_substeps(self, continuous: bool = False) -> int:
        """Euler substeps per kernel application for this configuration."""
        if self.variant == "multistep":
            return self.t_sub or multistep_substeps(self.eta)
        return self.substeps_cts if continuous else 1


def _psd_sqrt(sigma) -> np.ndarray:
    if sigma is None:
        raise ValueError("anisotropic variant needs a covariance matrix")
    s = np.asarray(sigma, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or not np.allclose(s, s.T, atol=1e-12):
        raise ValueError("covariance must be a symmetric square matrix")
    vals, vecs = np.linalg.eigh(s)
    if vals.min() < -1e-8:
        raise ValueError(f"covariance is not positive semidefinite (min eigenvalue {vals.min()})")
    if vals.max() > 1 + 1e-12:
        raise ValueError("covariance operator norm must be at most 1")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def project_ball(x: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the closed ball of the given radius about the origin."""
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    scale = np.minimum(1.0, radius / np.maximum(norm, np.finfo(float).tiny))
    return x * scale


def multistep_substeps(eta: float) -> int:
    """``floor(1 / eta)`` substeps, guarded against representation error."""
    if not 0 < eta < 1:
        raise ValueError("multistep kernel needs eta in (0, 1)")
    return int(math.floor(1.0 / eta + 1e-9))


def sample_minibatch(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform size-k subset of ``range(n)``, sorted."""
    if not 1 <= k <= n:
        raise ValueError(f"batch size k={k} must lie in [1, {n}]")
    return keys_to_batch(rng.random(n), k)


def advance(x: np.ndarray, model: LossModel, points: np.ndarray, batch: np.ndarray,
            xi: np.ndarray, cfg: SgldConfig) -> np.ndarray:
    """Apply one kernel window: ``xi.shape[-2]`` Euler steps of size ``eta / T``.

    ``x`` is ``(..., d)``, ``xi`` is ``(..., T, d)``; with ``T == 1`` this is the
    plain SGLD update.
    """
    T = xi.shape[-2]
    gamma = cfg.eta / T
    scale = math.sqrt(2.0 * gamma / cfg.beta)
    # overflow is reported below as a single FloatingPointError
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(T):
            drift = batch_grad(model, points, x, batch, cfg.lam)
            x = x - gamma * drift + scale * cfg.noise(xi[..., j, :])
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite iterate; step size too large for this loss?")
    return cfg.finish(x)


def _checked_noise(noise: NoiseDraw, n: int, k: int, d: int):
    xi = np.asarray(noise.xi, dtype=float)
    batch = np.asarray(noise.batch, dtype=int)
    if xi.shape[-1] != d:
        raise ValueError("noise dimension mismatch")
    if batch.shape[-1] != k or batch.min() < 0 or batch.max() >= n:
        raise ValueError(f"batch must hold k={k} indices in range(n={n})")
    return xi, batch


def sgld_step(state: ChainState, model: LossModel, dataset: DataSet, cfg: SgldConfig,
              noise: NoiseDraw) -> ChainState:
    """``x' = x - eta * grad F_S(x, B) - eta * lam * x + sqrt(2 eta / beta) * xi``."""
    xi, batch = _checked_noise(noise, dataset.n, cfg.k, model.d)
    x = np.asarray(state.x, dtype=float)
    x_new = advance(x, model, dataset.points, batch, xi[..., None, :], cfg)
    return ChainState(x_new, state.step_index + 1)


def continuous_window(state: ChainState, model: LossModel, dataset: DataSet, cfg: SgldConfig,
                      batch, rng: np.random.Generator | None = None, xi=None,
                      substeps: int | None = None) -> ChainState:
    """Advance the frozen-batch diffusion by time ``eta`` with ``T`` Euler substeps.

    Either pass ``rng`` (draws ``T`` standard normals) or explicit increments
    ``xi`` of shape ``(T, d)``.
    """
    T = substeps or cfg.substeps_cts
    batch = np.asarray(batch, dtype=int)
    if xi is None:
        xi = rng.standard_normal((T, model.d))
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-2] != T:
        raise ValueError(f"expected {T} substep increments, got {xi.shape[-2]}")
    _checked_noise(NoiseDraw(xi[..., 0, :], batch), dataset.n, cfg.k, model.d)
    x_new = advance(np.asarray(state.x, dtype=float), model, dataset.points, batch, xi, cfg)
    return ChainState(x_new, state.step_index + 1)


def multistep_kernel(state: ChainState, model: LossModel, dataset: DataSet, cfg: SgldConfig,
                     rng: np.random.Generator, batch=None, xi=None) -> ChainState:
    """One window with ``floor(1/eta)`` substeps of size ``eta / floor(1/eta)``."""
    T = multistep_substeps(cfg.eta)
    if batch is None:
        batch = sample_minibatch(dataset.n, cfg.k, rng)
    return continuous_window(state, model, dataset, cfg, batch, rng, xi=xi, substeps=T)


def iterate_chain(x0: np.ndarray, model: LossModel, points: np.ndarray, cfg: SgldConfig,
                  horizon: int, streams: ReplicaStreams,
                  continuous: bool = False) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(t, x_t)`` for ``t = 0..horizon`` with ``x_t`` of shape ``(R, d)``."""
    n = points.shape[-2]
    T = cfg.kernel_substeps(continuous)
    x = x0
    yield 0, x
    for t in range(1, horizon + 1):
        batch, xi, _ = streams.step(n, cfg.k, T, model.d)
        x = advance(x, model, points, batch, xi, cfg)
        yield t, x


def run_chain(initial: InitialSpec, model: LossModel, dataset: DataSet, cfg: SgldConfig,
              horizon: int, rng, continuous: bool = False) -> np.ndarray:
    """Trajectory array of shape ``(horizon + 1, R, d)``.

    ``rng`` is a :class:`ReplicaStreams` (R replicas) or a single generator (R = 1).
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    streams = rng if isinstance(rng, ReplicaStreams) else ReplicaStreams.from_generator(rng)
    x0 = streams.initial(model.d, initial.x0, initial.sigma0)
    traj = [x.copy() for _, x in iterate_chain(x0, model, dataset.points, cfg, horizon,
                                               streams, continuous)]
    return np.stack(traj)
