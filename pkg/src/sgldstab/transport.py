"""Distortions g, the metrics rho_g and rho, and Wasserstein estimators.

The cap distortion ``g(r) = min(r, R)`` stands in for the contraction-adapted g
of the reflection-coupling literature: it is concave, non-decreasing, constant on
``[R, inf)`` and satisfies ``phi * r <= g(r) <= r`` on ``[0, R]`` with ``phi = 1``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import CertificateReport

__all__ = [
    "EmpiricalDistance",
    "GFunction",
    "SemimetricParams",
    "brute_force_assignment",
    "check_semimetric_lemmas",
    "estimate_w_upper",
    "eval_g",
    "exact_cost_assignment",
    "exact_w1_sorted_1d",
    "exact_wp_assignment",
    "lyapunov_v",
    "rho",
    "rho_g",
]

ASSIGNMENT_CAP = 256


@dataclass(frozen=True)
class GFunction:
    R: float
    phi: float = 1.0
    kind: str = "cap"

    def __post_init__(self):
        if self.kind != "cap":
            raise ValueError(f"unsupported distortion kind {self.kind!r}")
        if not self.R > 0:
            raise ValueError("plateau radius must be positive")
        if not 0 < self.phi <= 1:
            raise ValueError("phi must lie in (0, 1]")

    def __call__(self, r):
        return np.minimum(r, self.R)


@dataclass(frozen=True)
class SemimetricParams:
    g: GFunction
    eps: float

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")


@dataclass(frozen=True)
class EmpiricalDistance:
    value: float
    sem: float
    estimator: str


def eval_g(g: GFunction, r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("g is defined on [0, inf)")
    out = g(r)
    return float(out) if out.ndim == 0 else out


def lyapunov_v(x):
    """``V(x) = 1 + ||x||^2``."""
    x = np.asarray(x, dtype=float)
    return 1.0 + np.sum(x * x, axis=-1)


def _pair(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError("dimension mismatch")
    return x, y


def rho_g(x, y, g: GFunction):
    x, y = _pair(x, y)
    return g(np.linalg.norm(x - y, axis=-1))


def rho(x, y, params: SemimetricParams):
    """``g(||x - y||) * (1 + 2 eps + eps ||x||^2 + eps ||y||^2)``."""
    x, y = _pair(x, y)
    eps = params.eps
    weight = 1.0 + 2.0 * eps + eps * np.sum(x * x, axis=-1) + eps * np.sum(y * y, axis=-1)
    return params.g(np.linalg.norm(x - y, axis=-1)) * weight


def _cost(x, y, cost: str, params):
    if cost == "w1":
        return np.linalg.norm(x - y, axis=-1)
    if cost == "w2sq":
        return np.sum((x - y) ** 2, axis=-1)
    if cost == "rho":
        return rho(x, y, params)
    if cost == "rho_g":
        return rho_g(x, y, params.g if isinstance(params, SemimetricParams) else params)
    raise ValueError(f"unknown cost {cost!r}")


def estimate_w_upper(x, y, cost: str = "w1", params=None) -> EmpiricalDistance:
    """Mean and standard error of the cost over coupled pairs ``(x_i, y_i)``.

    Any coupling gives an upper bound on the transport cost, so this is an
    upper-bound estimator of W_1, W_2^2, W_rho or W_g respectively.
    """
    x, y = _pair(np.atleast_2d(x), np.atleast_2d(y))
    if x.shape[0] < 2 or x.shape != y.shape:
        raise ValueError("need at least two coupled pairs of equal shape")
    c = _cost(x, y, cost, params)
    return EmpiricalDistance(float(c.mean()), float(c.std(ddof=1) / math.sqrt(c.size)),
                             "coupling_mean")


def exact_w1_sorted_1d(a, b) -> EmpiricalDistance:
    """Exact empirical W1 in one dimension via the sorted (monotone) matching."""
    a = np.sort(np.ravel(np.asarray(a, dtype=float)))
    b = np.sort(np.ravel(np.asarray(b, dtype=float)))
    if a.size != b.size or a.size == 0:
        raise ValueError("sample sets must be non-empty and of equal size")
    return EmpiricalDistance(float(np.mean(np.abs(a - b))), 0.0, "sorted_1d")


def _as_points(a):
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def exact_cost_assignment(cost_matrix) -> float:
    """Minimal mean cost over permutations of an ``N x N`` cost matrix."""
    c = np.asarray(cost_matrix, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("cost matrix must be square")
    if c.shape[0] > ASSIGNMENT_CAP:
        raise ValueError(f"assignment oracle limited to N <= {ASSIGNMENT_CAP}")
    rows, cols = linear_sum_assignment(c)
    return float(c[rows, cols].sum() / c.shape[0])


def exact_wp_assignment(a, b, p: int = 1) -> EmpiricalDistance:
    """Exact empirical ``W_p`` between equal-size uniform point clouds."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    a, b = _as_points(a), _as_points(b)
    if a.shape != b.shape:
        raise ValueError("sample sets must have equal size and dimension")
    diff = a[:, None, :] - b[None, :, :]
    cost = np.sqrt(np.sum(diff * diff, axis=-1)) if p == 1 else np.sum(diff * diff, axis=-1)
    return EmpiricalDistance(exact_cost_assignment(cost) ** (1.0 / p), 0.0, "exact_assignment")


def brute_force_assignment(cost_matrix) -> float:
    """Factorial enumeration of all matchings; only for tiny N."""
    c = np.asarray(cost_matrix, dtype=float)
    n = c.shape[0]
    if n > 8:
        raise ValueError("brute force limited to N <= 8")
    idx = np.arange(n)
    best = min(c[idx, list(perm)].sum() for perm in itertools.permutations(range(n)))
    return float(best / n)


def weak_triangle_coefficient(params: SemimetricParams) -> float:
    """``2 (1 + (R / phi) * max(eps R, 1))``."""
    g, eps = params.g, params.eps
    return 2.0 * (1.0 + (g.R / g.phi) * max(eps * g.R, 1.0))


def _report(name: str, probes: int, viol: np.ndarray) -> CertificateReport:
    worst = float(np.max(viol)) if viol.size else 0.0
    return CertificateReport(name, probes, worst, worst <= 0.0)


def _rel(lhs, rhs):
    """Violation ``lhs - rhs`` with a rounding allowance relative to the magnitudes."""
    return lhs - rhs - 1e-12 * (np.abs(lhs) + np.abs(rhs))


def _probe_points(rng, probes, d, R):
    # scales straddle the plateau radius so every case of the lemmas is exercised
    scale = R * np.exp(rng.uniform(np.log(0.02), np.log(4.0), (probes, 1)))
    return scale * rng.standard_normal((probes, d))


def check_semimetric_lemmas(params: SemimetricParams, rng: np.random.Generator, probes: int,
                            d: int = 4, samples: int = 64) -> CertificateReport:
    """Random-probe check of the semimetric inequalities used downstream.

    Sub-reports: weak triangle inequality, symmetry, identity of indiscernibles,
    subadditivity of the cap metric, the pointwise and moment-form comparison
    with W2, and the sample-level perturbation inequality.
    """
    R = params.g.R
    x, y = _probe_points(rng, probes, d, R), _probe_points(rng, probes, d, R)
    # z near x or y as well as independent, to hit the small-distance cases
    mix = rng.integers(0, 3, probes)[:, None]
    z_far = _probe_points(rng, probes, d, R)
    z_near = y + 0.5 * R * rng.uniform(0, 1, (probes, 1)) * rng.standard_normal((probes, d))
    z = np.where(mix == 0, z_far, np.where(mix == 1, z_near, x + (z_near - y)))

    coef = weak_triangle_coefficient(params)
    rxy = rho(x, y, params)
    tri = _rel(rxy, rho(x, z, params) + coef * rho(z, y, params))
    sym = np.abs(rxy - rho(y, x, params)) - 1e-12 * np.abs(rxy)
    # rho(x, x) = 0 and rho(x, y) > 0 whenever x != y
    apart = np.where(np.linalg.norm(x - y, axis=-1) > 0, np.where(rxy > 0, -1.0, 1.0), rxy)
    ident = np.concatenate([np.abs(rho(x, x, params)), apart])
    gsub = _rel(rho_g(x, y, params.g), rho_g(x, z, params.g) + rho_g(z, y, params.g))
    norm2 = lambda v: np.sum(v * v, axis=-1)  # noqa: E731
    w2_point = _rel(rxy, np.linalg.norm(x - y, axis=-1)
                    * (1 + 2 * params.eps + norm2(x) + norm2(y)))

    # sample-level statements on synthetic clouds (X, Y, Dx, Dy)
    n_sets = max(1, probes // samples)
    w2_moment, perturb = [], []
    for _ in range(n_sets):
        X = _probe_points(rng, samples, d, R)
        Y = X + _probe_points(rng, samples, d, R) * rng.uniform(0, 1)
        dscale = R * np.exp(rng.uniform(np.log(1e-3), np.log(2.0)))
        Dx = dscale * rng.standard_normal((samples, d))
        Dy = dscale * rng.uniform(0, 2) * rng.standard_normal((samples, d))
        base = rho(X, Y, params).mean()
        m4x, m4y = np.mean(norm2(X) ** 2), np.mean(norm2(Y) ** 2)
        w2 = math.sqrt(np.mean(norm2(X - Y)))
        w2_moment.append(_rel(base, w2 * (1 + 2 * params.eps + params.eps * (math.sqrt(m4x)
                                                                            + math.sqrt(m4y)))))
        sig_d = max(np.mean(norm2(Dx)), np.mean(norm2(Dy)))
        sig = max(m4x, m4y, np.mean(norm2(X + Dx) ** 2), np.mean(norm2(Y + Dy) ** 2))
        lhs = rho(X + Dx, Y + Dy, params).mean()
        rhs = base + 2.0 * math.sqrt(sig_d) * (1 + 2 * params.eps + 6 * params.eps * math.sqrt(sig))
        perturb.append(_rel(lhs, rhs))

    subs = (
        _report("weak_triangle", probes, tri),
        _report("symmetry", probes, sym),
        _report("identity", probes, ident),
        _report("rho_g_subadditivity", probes, gsub),
        _report("w2_comparison_pointwise", probes, w2_point),
        _report("w2_comparison_moment", n_sets, np.array(w2_moment)),
        _report("perturbation", n_sets, np.array(perturb)),
    )
    worst = max(s.worst_violation for s in subs)
    return CertificateReport("semimetric_lemmas", probes, worst, all(s.passed for s in subs),
                             subs)
