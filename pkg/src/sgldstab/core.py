"""Loss families, data sets and numerical certification of their assumption constants.

Every built-in family has closed-form constants, so the certificates below are
exact up to floating point rounding.  Arrays follow the convention that the last
axis is the parameter (or instance) coordinate and all leading axes broadcast.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "AssumptionConstants",
    "CertificateReport",
    "DataSet",
    "LossModel",
    "ASSUMPTIONS",
    "CERT_TOL",
    "certify",
    "cosine_dissipative",
    "eval_grad",
    "eval_loss",
    "make_loss",
    "make_neighbor",
    "minibatch_grad",
    "pseudo_huber",
    "quadratic",
    "sample_ball",
    "sample_dataset",
]

FAMILIES = ("quadratic", "pseudo_huber", "cosine_dissipative")
ASSUMPTIONS = ("lipschitz", "smoothness", "dissipativity", "minima_ball", "origin_gradient")
CERT_TOL = 1e-9


@dataclass(frozen=True)
class AssumptionConstants:
    """Declared constants of a loss family.

    ``L`` is absent for non-Lipschitz families and ``m``/``b`` are absent when the
    family is not dissipative on its own (weight decay is tracked in ``lam``).
    """

    M: float
    L: float | None = None
    m: float | None = None
    b: float | None = None
    lam: float = 0.0

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError(f"smoothness constant must be positive, got M={self.M}")
        if self.L is not None and self.L < 0:
            raise ValueError("Lipschitz constant must be non-negative")
        if (self.m is None) != (self.b is None):
            raise ValueError("dissipativity needs both m and b")
        if self.m is not None:
            if not self.m > 0 or self.b < 0:
                raise ValueError(f"invalid dissipativity constants m={self.m}, b={self.b}")
            if self.M < self.m:
                raise ValueError(f"smoothness M={self.M} must dominate dissipativity m={self.m}")
        if self.lam < 0:
            raise ValueError("weight decay must be non-negative")

    @property
    def dissipative(self) -> bool:
        return self.m is not None

    @property
    def minima_radius(self) -> float:
        return math.sqrt(self.b / self.m)


@dataclass(frozen=True)
class LossModel:
    """A loss family ``f(x, z)`` with parameters and declared constants.

    ``params`` always carries ``z_max``, the radius of the ball the data
    distribution is supported on.
    """

    family: str
    d: int
    params: dict
    constants: AssumptionConstants

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown loss family {self.family!r}")
        if self.d < 1:
            raise ValueError("dimension must be at least 1")
        if not self.params.get("z_max", 0) > 0:
            raise ValueError("z_max must be positive")
        if self.family == "pseudo_huber" and not self.params.get("delta", 0) > 0:
            raise ValueError("pseudo_huber needs delta > 0")
        if self.family == "cosine_dissipative":
            if self.params.get("a", -1) < 0:
                raise ValueError("cosine_dissipative needs a >= 0")
            if len(self.params["w"]) != self.d:
                raise ValueError("cosine_dissipative weight vector must have length d")

    @property
    def z_max(self) -> float:
        return float(self.params["z_max"])

    def with_constants(self, **overrides) -> "LossModel":
        return replace(self, constants=replace(self.constants, **overrides))

    def loss(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        if self.family == "quadratic":
            return 0.5 * np.sum((x - z) ** 2, axis=-1)
        if self.family == "pseudo_huber":
            delta = self.params["delta"]
            return np.sqrt(delta**2 + np.sum((x - z) ** 2, axis=-1))
        w = np.asarray(self.params["w"], dtype=float)
        return (0.5 * np.sum(x * x, axis=-1) + self.params["a"] * np.cos(x @ w)
                + np.sum(z * x, axis=-1))

    def grad(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        if self.family == "quadratic":
            return x - z
        if self.family == "pseudo_huber":
            diff = x - z
            delta = self.params["delta"]
            return diff / np.sqrt(delta**2 + np.sum(diff * diff, axis=-1, keepdims=True))
        w = np.asarray(self.params["w"], dtype=float)
        a = self.params["a"]
        return x - a * np.sin(x @ w)[..., None] * w + z


def quadratic(d: int, z_max: float = 1.0, lam: float = 0.0) -> LossModel:
    """``f(x, z) = ||x - z||^2 / 2``: convex, M = 1, (m, b) = (1/2, z_max^2 / 2)."""
    consts = AssumptionConstants(M=1.0, m=0.5, b=0.5 * z_max**2, lam=lam)
    return LossModel("quadratic", d, {"z_max": float(z_max)}, consts)


def pseudo_huber(d: int, z_max: float = 1.0, lam: float = 0.0, delta: float = 1.0) -> LossModel:
    """``f(x, z) = sqrt(delta^2 + ||x - z||^2)``: 1-Lipschitz and (1/delta)-smooth.

    ``delta = 1`` is the unit pseudo-Huber loss.  Larger ``delta`` flattens the
    curvature, which slows the drift-driven contraction of coupled chains.
    """
    consts = AssumptionConstants(M=1.0 / delta, L=1.0, lam=lam)
    return LossModel("pseudo_huber", d, {"z_max": float(z_max), "delta": float(delta)}, consts)


def cosine_dissipative(d: int, a: float = 2.0, w=None, z_max: float = 1.0,
                       lam: float = 0.0) -> LossModel:
    """``f(x, z) = ||x||^2/2 + a cos(<w, x>) + <z, x>``.

    Non-convex once ``a ||w||^2 > 1``.  The default ``w`` is the first unit vector.
    """
    if w is None:
        w = np.zeros(d)
        w[0] = 1.0
    w = tuple(float(v) for v in w)
    wn = math.sqrt(sum(v * v for v in w))
    consts = AssumptionConstants(M=1.0 + a * wn**2, m=0.5, b=0.5 * (a * wn + z_max) ** 2, lam=lam)
    return LossModel("cosine_dissipative", d, {"z_max": float(z_max), "a": float(a), "w": w},
                     consts)


def make_loss(family: str, d: int, **params) -> LossModel:
    builders = {"quadratic": quadratic, "pseudo_huber": pseudo_huber,
                "cosine_dissipative": cosine_dissipative}
    if family not in builders:
        raise ValueError(f"unknown loss family {family!r}")
    return builders[family](d, **params)


@dataclass(frozen=True)
class DataSet:
    """n data points stored row-wise in an ``(n, d)`` array."""

    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("a data set needs shape (n, d) with n >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("data points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return self.points[i]


def sample_ball(rng: np.random.Generator, size, d: int, radius: float) -> np.ndarray:
    """Uniform draws from the closed ball of the given radius, shape ``(*size, d)``."""
    size = (size,) if np.isscalar(size) else tuple(size)
    g = rng.standard_normal(size + (d,))
    g /= np.linalg.norm(g, axis=-1, keepdims=True)
    u = rng.random(size + (1,))
    return radius * u ** (1.0 / d) * g


def sample_dataset(model: LossModel, n: int, rng: np.random.Generator) -> DataSet:
    """Draw ``S ~ P^n`` with P uniform on the ball of radius ``z_max``."""
    return DataSet(sample_ball(rng, n, model.d, model.z_max))


def make_neighbor(dataset: DataSet, index: int, z_new) -> DataSet:
    """Copy of ``dataset`` with the point at (0-based) ``index`` replaced."""
    if not 0 <= index < dataset.n:
        raise IndexError(f"index {index} out of range for n={dataset.n}")
    pts = dataset.points.copy()
    pts[index] = np.asarray(z_new, dtype=float)
    return DataSet(pts)


def _check_point(model: LossModel, x, z):
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape[-1] != model.d or z.shape[-1] != model.d:
        raise ValueError(f"dimension mismatch: expected d={model.d}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
        raise ValueError("non-finite input")
    return x, z


def eval_loss(model: LossModel, x, z):
    x, z = _check_point(model, x, z)
    return model.loss(x, z)


def eval_grad(model: LossModel, x, z):
    x, z = _check_point(model, x, z)
    return model.grad(x, z)


def gather(points: np.ndarray, batch: np.ndarray) -> np.ndarray:
    """Select batch rows from shared ``(n, d)`` or per-replica ``(R, n, d)`` data."""
    if points.ndim == 2:
        return points[batch]
    return np.take_along_axis(points, batch[..., None], axis=1)


def batch_grad(model: LossModel, points: np.ndarray, x: np.ndarray, batch: np.ndarray,
               lam: float) -> np.ndarray:
    """Unchecked mini-batch gradient for stacked states ``x`` of shape ``(..., d)``."""
    z = gather(points, batch)
    return model.grad(x[..., None, :], z).mean(axis=-2) + lam * x


def minibatch_grad(model: LossModel, dataset: DataSet, x, batch, lam: float):
    """``(1/|B|) sum_{i in B} grad f(x, z_i) + lam * x`` (indices are 0-based)."""
    batch = np.asarray(batch, dtype=int)
    if batch.size == 0:
        raise ValueError("empty mini-batch")
    if batch.min() < 0 or batch.max() >= dataset.n:
        raise IndexError("mini-batch index out of range")
    if lam < 0:
        raise ValueError("weight decay must be non-negative")
    x = np.asarray(x, dtype=float)
    return batch_grad(model, dataset.points, x, batch, lam)


@dataclass(frozen=True)
class CertificateReport:
    assumption_id: str
    probes: int
    worst_violation: float
    passed: bool
    details: tuple = ()


def _probe_scale(consts: AssumptionConstants) -> float:
    if consts.dissipative and consts.b > 0:
        return 3.0 * consts.minima_radius
    return 3.0


def certify(model: LossModel, assumption_id: str, probe_count: int,
            rng: np.random.Generator) -> CertificateReport:
    """Random-probe check that ``model`` satisfies an assumption with its declared constants.

    ``worst_violation`` is the largest amount by which the inequality fails
    (negative when every probe holds with slack).
    """
    c = model.constants
    if assumption_id not in ASSUMPTIONS:
        raise ValueError(f"unknown assumption {assumption_id!r}")
    needs_diss = assumption_id in ("dissipativity", "minima_ball", "origin_gradient")
    if assumption_id == "lipschitz" and c.L is None:
        raise ValueError("model declares no Lipschitz constant")
    if needs_diss and not c.dissipative:
        raise ValueError("model declares no dissipativity constants")

    d, sigma = model.d, _probe_scale(c)
    z = sample_ball(rng, probe_count, d, model.z_max)
    x1 = sigma * rng.standard_normal((probe_count, d))

    if assumption_id == "lipschitz":
        x2 = sigma * rng.standard_normal((probe_count, d))
        lhs = np.abs(model.loss(x1, z) - model.loss(x2, z))
        viol = lhs - c.L * np.linalg.norm(x1 - x2, axis=-1)
    elif assumption_id == "smoothness":
        x2 = x1 + rng.standard_normal((probe_count, d)) * rng.exponential(sigma, (probe_count, 1))
        lhs = np.linalg.norm(model.grad(x1, z) - model.grad(x2, z), axis=-1)
        viol = lhs - c.M * np.linalg.norm(x1 - x2, axis=-1)
    elif assumption_id == "dissipativity":
        inner = np.sum(model.grad(x1, z) * x1, axis=-1)
        viol = c.m * np.sum(x1 * x1, axis=-1) - c.b - inner
    elif assumption_id == "minima_ball":
        r0 = c.minima_radius
        u = rng.standard_normal((probe_count, d))
        u /= np.linalg.norm(u, axis=-1, keepdims=True)
        t = rng.uniform(r0 + 0.01, max(10.0 * r0, r0 + 0.02), (probe_count, 1))
        radial = np.sum(u * model.grad(t * u, z), axis=-1)
        t = t[:, 0]
        # radial derivative dominates m t - b / t, which is itself positive past sqrt(b/m)
        viol = np.maximum(c.m * t - c.b / t - radial, -radial)
    else:
        g0 = np.linalg.norm(model.grad(np.zeros((probe_count, d)), z), axis=-1)
        viol = g0 - c.M * c.minima_radius

    worst = float(np.max(viol))
    return CertificateReport(assumption_id, probe_count, worst, worst <= CERT_TOL)
