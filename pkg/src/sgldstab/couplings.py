"""Paired SGLD chains under synchronous and reflection couplings.

Both chains of a pair read the same per-replica stream, so sharing noise and
batches is structural.  In reflection mode the second chain uses the mirrored
increment ``(I - 2 e e^T) xi`` with ``e`` the unit vector from y to x, recomputed
at every substep, until the pair is glued; afterwards it moves synchronously.

Gluing happens when any of the following holds after a substep:

* the separation is at most ``meet_threshold`` (checked before and after
  the move, so a pair pushed slightly apart by a synchronous step is re-glued);
* the pair crossed, i.e. the new difference points against ``e``;
* a Brownian-bridge test fires.  Along ``e`` the difference is driven by
  ``2 sqrt(2/beta) dW``, so a bridge from ``r`` to ``r'`` visits zero with
  probability ``exp(-2 r r' / (8 gamma / beta))``.

Gluing only overwrites y, so the x chain is always an exact SGLD chain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import dissipative_constants
from .core import DataSet, LossModel, batch_grad
from .dynamics import InitialSpec, NoiseDraw, SgldConfig, sample_minibatch
from .streams import ReplicaStreams
from .transport import GFunction, SemimetricParams, rho, rho_g

__all__ = [
    "CoupledState",
    "CoupledTrajectory",
    "CouplingConfig",
    "MODES",
    "default_semimetric",
    "householder",
    "pair_initials",
    "reflection_pair_step",
    "run_coupled",
    "synchronous_pair_step",
]

MODES = ("synchronous", "reflection", "hybrid")
NEAR_ZERO = 1e-14
STATS = ("dist", "dist_sq", "rho", "rho_g", "met")


@dataclass(frozen=True)
class CoupledState:
    x: np.ndarray
    y: np.ndarray
    met: bool = False
    meet_step: int | None = None
    step_index: int = 0


@dataclass(frozen=True)
class CouplingConfig:
    """Coupling mode and gluing controls.

    ``hybrid`` reflects on steps whose batch avoids every index at which the two
    data sets differ and couples synchronously otherwise; it is the coupling used
    for neighbouring data sets.  ``meet_threshold=None`` means 1% of the per-step
    noise scale.  ``force_index`` pins one data index into every batch.
    """

    mode: str = "synchronous"
    meet_threshold: float | None = None
    share_batches: bool = True
    bridge: bool = True
    force_index: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown coupling mode {self.mode!r}")
        if self.meet_threshold is not None and not (0 < self.meet_threshold < math.inf):
            raise ValueError("meet_threshold must be positive and finite")
        if not self.share_batches:
            raise ValueError("coupled chains always share batch index positions")

    def threshold(self, cfg: SgldConfig) -> float:
        if self.meet_threshold is not None:
            return self.meet_threshold
        return 0.01 * math.sqrt(2.0 * cfg.eta / cfg.beta)


def householder(e: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """``(I - 2 e e^T) xi`` for unit ``e``, batched over leading axes."""
    return xi - 2.0 * e * np.sum(e * xi, axis=-1, keepdims=True)


def _coupled_window(x, y, met, model, pa, pb, batch, xi, u, cfg, reflect, threshold, bridge):
    """Advance stacked pairs by one kernel window; returns ``(x, y, met)``.

    ``reflect`` marks the pairs coupled by reflection on this window; ``met``
    pairs among them stay glued.
    """
    T = xi.shape[-2]
    gamma = cfg.eta / T
    scale = math.sqrt(2.0 * gamma / cfg.beta)
    bridge_var = 8.0 * gamma / cfg.beta
    met = met.copy()
    for j in range(T):
        diff = x - y
        r = np.linalg.norm(diff, axis=-1)
        active = reflect & ~met
        met |= active & ((r < NEAR_ZERO) | (r <= threshold))
        active &= ~met
        e = diff / np.where(r > 0, r, 1.0)[..., None]
        xj = xi[..., j, :]
        yj = np.where(active[..., None], householder(e, xj), xj)
        x_new = x - gamma * batch_grad(model, pa, x, batch, cfg.lam) + scale * cfg.noise(xj)
        y_new = y - gamma * batch_grad(model, pb, y, batch, cfg.lam) + scale * cfg.noise(yj)
        if np.any(active):
            diff_new = x_new - y_new
            along = np.sum(diff_new * e, axis=-1)
            glue = (np.linalg.norm(diff_new, axis=-1) <= threshold) | (along <= 0)
            if bridge:
                p_hit = np.exp(-2.0 * r * np.maximum(along, 0.0) / bridge_var)
                glue |= u[..., j] < p_hit
            met |= active & glue
        glued = reflect & met
        y_new = np.where(glued[..., None], x_new, y_new)
        x, y = x_new, y_new
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise FloatingPointError("non-finite iterate in coupled chains")
    x, y = cfg.finish(x), cfg.finish(y)
    # a synchronous window can re-separate a glued pair only in hybrid mode
    met = np.where(reflect, met, np.all(x == y, axis=-1))
    return x, y, met


def _as_stack(v):
    return np.asarray(v, dtype=float)[None, :]


def synchronous_pair_step(cs: CoupledState, model: LossModel, dataset_a: DataSet,
                          dataset_b: DataSet, cfg: SgldConfig, noise: NoiseDraw) -> CoupledState:
    """One SGLD step of x under ``dataset_a`` and y under ``dataset_b`` with shared draws."""
    x, y = np.asarray(cs.x, dtype=float), np.asarray(cs.y, dtype=float)
    if x.shape != y.shape or x.shape[-1] != model.d:
        raise ValueError("coupled states must both have dimension d")
    if dataset_a.points.shape != dataset_b.points.shape:
        raise ValueError("neighbouring data sets must have equal shape")
    batch = np.asarray(noise.batch, dtype=int)
    xi = np.asarray(noise.xi, dtype=float).reshape(1, -1, model.d)
    T = xi.shape[1]
    reflect = np.zeros(1, dtype=bool)
    xn, yn, met = _coupled_window(_as_stack(x), _as_stack(y), np.array([cs.met]), model,
                                  dataset_a.points, dataset_b.points, batch[None, :], xi,
                                  np.ones((1, T)), cfg, reflect, 0.0, False)
    return CoupledState(xn[0], yn[0], bool(met[0]),
                        cs.meet_step if cs.met else (cs.step_index + 1 if met[0] else None),
                        cs.step_index + 1)


def reflection_pair_step(cs: CoupledState, model: LossModel, dataset: DataSet, cfg: SgldConfig,
                         ccfg: CouplingConfig | None = None, rng: np.random.Generator | None = None,
                         noise: NoiseDraw | None = None, u=None) -> CoupledState:
    """One reflection-coupled window on a single data set.

    Draws come from ``rng`` unless ``noise`` (and optionally the gluing
    uniforms ``u``) are given.  A pair that has already met passes through a
    synchronous step and stays glued.
    """
    ccfg = ccfg or CouplingConfig("reflection")
    x, y = np.asarray(cs.x, dtype=float), np.asarray(cs.y, dtype=float)
    if x.shape != y.shape or x.shape[-1] != model.d:
        raise ValueError("coupled states must both have dimension d")
    T = cfg.kernel_substeps()
    if noise is None:
        batch = sample_minibatch(dataset.n, cfg.k, rng)
        xi = rng.standard_normal((T, model.d))
        u = rng.random(T)
    else:
        batch = np.asarray(noise.batch, dtype=int)
        xi = np.asarray(noise.xi, dtype=float).reshape(-1, model.d)
        T = xi.shape[0]
        u = np.ones(T) if u is None else np.asarray(u, dtype=float)
    xn, yn, met = _coupled_window(_as_stack(x), _as_stack(y), np.array([cs.met]), model,
                                  dataset.points, dataset.points, batch[None, :], xi[None],
                                  u[None], cfg, np.ones(1, dtype=bool), ccfg.threshold(cfg),
                                  ccfg.bridge)
    newly = bool(met[0]) and not cs.met
    return CoupledState(xn[0], yn[0], bool(met[0]),
                        cs.step_index + 1 if newly else cs.meet_step, cs.step_index + 1)


def default_semimetric(model: LossModel, beta: float) -> SemimetricParams:
    """The rho parameters matching the model's regime.

    Dissipative families use the plateau radius and epsilon of the dissipative
    constants; Lipschitz families with weight decay cap at ``4 L / lambda``.
    """
    c = model.constants
    if c.dissipative:
        dc = dissipative_constants(c.M, c.m, c.b, model.d, beta)
        return SemimetricParams(GFunction(dc.R), dc.eps)
    if c.L is not None and c.lam > 0:
        return SemimetricParams(GFunction(4.0 * c.L / c.lam), 1.0)
    return SemimetricParams(GFunction(math.inf), 1.0)


@dataclass
class CoupledTrajectory:
    """Per-step means and standard errors over replicas.

    ``mean[name]`` and ``sem[name]`` are arrays of length ``horizon + 1`` for each
    statistic in ``dist, dist_sq, rho, rho_g, met``.
    """

    t: np.ndarray
    mean: dict
    sem: dict
    replicas: int
    meet_step: np.ndarray
    final_x: np.ndarray = field(repr=False)
    final_y: np.ndarray = field(repr=False)


def _stats(x, y, met, sem_params):
    dist = np.linalg.norm(x - y, axis=-1)
    vals = {"dist": dist, "dist_sq": dist * dist, "rho": rho(x, y, sem_params),
            "rho_g": rho_g(x, y, sem_params.g), "met": met.astype(float)}
    R = dist.shape[0]
    mean = {k: float(np.add.reduce(v) / R) for k, v in vals.items()}
    sem = {k: float(np.std(v, ddof=1) / math.sqrt(R)) if R > 1 else 0.0 for k, v in vals.items()}
    return mean, sem


def _differing(pa, pb):
    other_axes = tuple(i for i in range(pa.ndim) if i != pa.ndim - 2)
    return np.flatnonzero(np.any(pa != pb, axis=other_axes))


def run_coupled(initials, model: LossModel, datasets, cfg: SgldConfig, ccfg: CouplingConfig,
                horizon: int, replicas: int | ReplicaStreams, seed: int = 0,
                experiment_id: str = "couple", continuous: bool = False,
                sem_params: SemimetricParams | None = None,
                every: int = 1) -> CoupledTrajectory:
    """Simulate ``replicas`` coupled pairs and collect per-step distance statistics.

    ``initials`` is a pair of :class:`InitialSpec` whose Gaussian parts share one
    draw per replica; ``datasets`` a pair of point arrays or :class:`DataSet`
    objects, shape ``(n, d)`` shared or ``(R, n, d)`` per replica.  Statistics
    are recorded every ``every`` steps and at the end.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    streams = replicas if isinstance(replicas, ReplicaStreams) else ReplicaStreams(
        seed, experiment_id, replicas)
    R = streams.replicas
    pa, pb = (np.asarray(s.points if isinstance(s, DataSet) else s, dtype=float)
              for s in datasets)
    if pa.shape != pb.shape or pa.shape[-1] != model.d:
        raise ValueError("data sets must have equal shape with last axis d")
    n = pa.shape[-2]
    same = pa is pb or np.array_equal(pa, pb)
    if ccfg.mode == "reflection" and not same:
        raise ValueError("reflection coupling needs a single data set")
    differ = _differing(pa, pb)
    if ccfg.force_index is not None and not 0 <= ccfg.force_index < n:
        raise IndexError("force_index out of range")
    sem_params = sem_params or default_semimetric(model, cfg.beta)
    threshold = ccfg.threshold(cfg)

    ia, ib = initials
    # one shared standard normal per replica couples the initial laws synchronously
    g = streams.initial(model.d, 0.0, 1.0 if max(ia.sigma0, ib.sigma0) > 0 else 0.0)
    x = np.asarray(ia.x0, dtype=float) + ia.sigma0 * g
    y = np.asarray(ib.x0, dtype=float) + ib.sigma0 * g
    met = np.all(x == y, axis=-1) if ccfg.mode != "synchronous" else np.zeros(R, dtype=bool)
    meet_step = np.where(met, 0, -1)
    T = cfg.kernel_substeps(continuous)

    ts, means, sems = [], {k: [] for k in STATS}, {k: [] for k in STATS}

    def record(t):
        mu, se = _stats(x, y, met if ccfg.mode != "synchronous" else np.all(x == y, axis=-1),
                        sem_params)
        ts.append(t)
        for k in STATS:
            means[k].append(mu[k])
            sems[k].append(se[k])

    record(0)
    for t in range(1, horizon + 1):
        batch, xi, u = streams.step(n, cfg.k, T, model.d, force=ccfg.force_index)
        if ccfg.mode == "reflection":
            reflect = np.ones(R, dtype=bool)
        elif ccfg.mode == "hybrid":
            reflect = ~np.any(np.isin(batch, differ), axis=-1)
        else:
            reflect = np.zeros(R, dtype=bool)
        was = met
        x, y, met = _coupled_window(x, y, met, model, pa, pb, batch, xi, u, cfg, reflect,
                                    threshold, ccfg.bridge)
        meet_step = np.where(met & ~was & (meet_step < 0), t, meet_step)
        if t % every == 0 or t == horizon:
            record(t)
    return CoupledTrajectory(np.asarray(ts), {k: np.asarray(v) for k, v in means.items()},
                             {k: np.asarray(v) for k, v in sems.items()}, R, meet_step, x, y)


def pair_initials(x0=0.0, y0=0.0, sigma0: float = 0.0) -> tuple[InitialSpec, InitialSpec]:
    return InitialSpec(x0, sigma0), InitialSpec(y0, sigma0)
