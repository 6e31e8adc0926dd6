"""Closed-form constants and bounds for SGLD stability and generalization.

Two regimes are covered: Lipschitz losses trained with weight decay, and
dissipative smooth losses.  Constants that overflow (the dissipative ones are
exponential in the model parameters) evaluate to ``inf``, i.e. a vacuous bound.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

__all__ = [
    "BoundCurve",
    "DissipativeConstants",
    "LipschitzConstants",
    "analytic_lemma_bounds",
    "contraction_mixture",
    "ctilde",
    "dissipative_constants",
    "dissipative_gen_bound",
    "lipschitz_constants",
    "lipschitz_gen_bound",
    "recursion_envelope",
    "stability_to_gen",
]


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _div(a: float, b: float) -> float:
    if b == 0:
        return math.inf if a > 0 else 0.0
    return a / b


def _positive(**kw):
    for name, v in kw.items():
        if v is None or not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")


@dataclass(frozen=True)
class LipschitzConstants:
    L: float
    M: float
    lam: float
    beta: float
    a: float
    b_rate: float
    R_kappa: float
    R0: float
    R1_tilde: float
    phi_min: float
    c1: float
    c2: float
    c3: float
    C1: float
    C2: float
    C3: float | None
    C2_min: float
    sigma1: float | None = None

    @property
    def convex(self) -> bool:
        return self.lam >= self.M

    def to_dict(self) -> dict:
        return asdict(self)


def lipschitz_constants(L: float, M: float, lam: float, beta: float,
                        sigma1: float | None = None, min_variant: bool = False
                        ) -> LipschitzConstants:
    """Contraction and bound constants for an L-Lipschitz, M-smooth loss with weight decay.

    ``C2`` multiplies by ``max(c1, 1)``, the factor the W_g-to-W_1 comparison
    requires; ``min_variant=True`` swaps in the ``min(c1, 1)`` variant, which is
    always reported as ``C2_min``.  ``C3`` needs the initial first
    moment ``sigma1``.
    """
    _positive(L=L, M=M, lam=lam, beta=beta)
    a = beta * (M - lam)
    b_rate = beta * lam / 2.0
    R = 4.0 * L / lam
    c1 = _exp(2.0 * beta * L**2 * (M - lam) / lam**2)
    c2 = 8.0 * (L**2 * beta / lam + 1.0) / lam
    c3 = max(16.0 * L**2 * beta / lam**2, 2.0 / lam)
    convex = lam >= M
    C1 = c3 if convex else c1 * c2
    R0 = 0.0 if convex else R
    phi_min = 1.0 if convex else _exp(-a * R**2 / 8.0)
    R1_tilde = R / 2.0 + math.sqrt(R**2 / 4.0 + 8.0 / b_rate)
    C2_min = 4.0 * L**2 * min(c1, 1.0)
    C2 = C2_min if min_variant else 4.0 * L**2 * max(c1, 1.0)
    C3 = None
    if sigma1 is not None:
        if sigma1 < 0:
            raise ValueError("sigma1 must be non-negative")
        C3 = 4.0 * L * max(c1, 1.0) * (
            L + (lam + M) * (lam * sigma1 + 2.0 * L + 2.0 * math.sqrt(2.0 / beta)))
    return LipschitzConstants(L, M, lam, beta, a, b_rate, R, R0, R1_tilde, phi_min, c1, c2, c3,
                              C1, C2, C3, C2_min, sigma1)


def _plateau_factor(C: float, n: int, k: int, eta: float, t: float) -> float:
    """``min{eta t, (C + 1) n / (n - k)}``; only the first branch exists when k = n."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if t < 0:
        raise ValueError("t must be non-negative")
    growth = eta * t
    if k == n:
        return growth
    return min(growth, (C + 1.0) * n / (n - k))


def lipschitz_gen_bound(consts: LipschitzConstants, n: int, k: int, eta: float, t: float,
                        d: int, continuous: bool = True) -> float:
    """Generalization bound after t steps (continuous-time or discrete-time SGLD)."""
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    core = _plateau_factor(consts.C1, n, k, eta, t)
    if not continuous:
        if eta >= 1.0 / consts.lam:
            raise ValueError("discrete bound needs eta < 1 / lambda")
        if consts.C3 is None:
            raise ValueError("discrete bound needs sigma1 (initial first moment)")
    if core == 0:
        return 0.0  # min{eta t, .} vanishes even when the prefactor overflowed
    if continuous:
        return consts.C2 * core * k / n
    return consts.C3 * core * (k / n + math.sqrt(eta * d))


def ctilde(p: int, M: float, m: float, b: float, d: int, beta: float) -> float:
    """Uniform-in-time bound on the growth of the 2p-th moment of discrete SGLD."""
    if p < 1 or int(p) != p:
        raise ValueError("p must be an integer >= 1")
    _positive(M=M, m=m, d=d, beta=beta)
    if b < 0:
        raise ValueError("b must be non-negative")
    lead = (1.0 / m) * (6.0 / m) ** (p - 1) * (
        1.0 + 2 ** (2 * p) * p * (2 * p - 1) * d / (m * beta))
    bracket = (2.0 * b + 8.0 * (M**2 / m**2) * b) ** p + 1.0 + 2.0 * (d / beta) ** (p - 1) * (
        2 * p - 1) ** p
    return lead * bracket


@dataclass(frozen=True)
class DissipativeConstants:
    M: float
    m: float
    b: float
    d: int
    beta: float
    sigma2: float
    sigma4: float
    R: float
    phi: float
    eps: float
    C4: float
    c_tilde_p: dict = field(default_factory=dict)
    c_tilde_2: float = 0.0
    c_tilde_4: float = 0.0
    c_tilde_5: float = 0.0
    C5: float = 0.0
    C6: float = 0.0
    continuity: float = 0.0

    def c_tilde_3(self, eta: float, n: int, k: int) -> float:
        return contraction_mixture(self.C4, eta, n, k)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["c_tilde_p"] = {str(p): v for p, v in self.c_tilde_p.items()}
        return out


def dissipative_constants(M: float, m: float, b: float, d: int, beta: float,
                          sigma2: float = 0.0, sigma4: float = 0.0) -> DissipativeConstants:
    """All dissipative-regime constants, with ``g(R) = R`` for the cap distortion.

    ``sigma2`` and ``sigma4`` are the initial second and fourth moments.
    """
    _positive(M=M, m=m, d=d, beta=beta)
    if b < 0 or sigma2 < 0 or sigma4 < 0:
        raise ValueError("b and the initial moments must be non-negative")
    R = 2.0 * math.sqrt((beta * d + beta * m + b) * (1.0 / (beta * m) + 1.0) - 1.0)
    phi = 0.5 * _exp(-(beta * M / 2.0) * R**2 - 2.0 * R)
    lyap = beta * b + beta * m + d
    eps = min(1.0, _div(phi, R**2 * lyap))
    rate = min(beta * m / 2.0, 2.0 * lyap * eps, 2.0 * phi / R**2)
    C4 = _div(beta / 2.0, rate)

    ct = {p: ctilde(p, M, m, b, d, beta) for p in (1, 2)}
    s4, c2h = math.sqrt(sigma4), math.sqrt(ct[2])
    ct2 = 2.0 * (M**2 * s4 + M**2 * c2h + M**2 * (3 * b + 2 * d / beta) / m + d / beta) * (
        1.0 + 2 * eps + 6 * eps * s4 + 6 * eps * c2h
        + 12 * eps * (b / m + (d + 2) / (beta * m)))
    ct4 = 1.0 + _div(2.0 * R, phi) * max(eps * R, 1.0)
    ct5 = 2.0 * math.sqrt(2.0) * _exp(M**2) * M * math.sqrt(
        M**2 * s4 + M**2 * c2h + M**2 * b / m + d / beta) * (1.0 + 2 * eps * (1 + s4 + c2h))
    pref = _div(M * (sigma2 + math.sqrt(b / m)), phi * eps * max(R, 2.0))
    C5 = pref * ct2
    C6 = pref * max(ct2, 2.0 * ct4 * ct5)
    continuity = _div(M * (b / m + 1.0), phi * eps * max(R, 1.0))
    return DissipativeConstants(M, m, b, d, beta, sigma2, sigma4, R, phi, eps, C4, ct, ct2, ct4,
                                ct5, C5, C6, continuity)


def contraction_mixture(C: float, eta: float, n: int, k: int) -> float:
    """``k/n + (1 - k/n) exp(-eta / C)``: per-step factor mixing divergence and contraction."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    return k / n + (1.0 - k / n) * math.exp(-eta / C)


def recursion_envelope(factor: float, increment: float, t: int) -> float:
    """``sum_{s<t} factor^s * increment``, the solution of ``W' <= factor W + increment``."""
    if factor >= 1.0:
        return t * increment
    return (1.0 - factor**t) / (1.0 - factor) * increment


def dissipative_gen_bound(consts: DissipativeConstants, n: int, k: int, eta: float, t: float,
                          continuous: bool = True) -> float:
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if k < 1:
        raise ValueError("batch size must be >= 1")
    core = _plateau_factor(consts.C4, n, k, eta, t)
    if not continuous and eta > 1.0 / (2.0 * consts.m):
        raise ValueError("discrete bound needs eta <= 1 / (2 m)")
    if core == 0:
        return 0.0
    if continuous:
        return consts.C5 * core * k / (n * math.sqrt(eta))
    return consts.C6 * core * (k / (n * math.sqrt(eta)) + math.sqrt(eta))


_LEMMA_PARAMS = {
    "moment_cts": ("p", "mu_p", "m", "b", "beta", "d", "t"),
    "first_moment_disc": ("mu_1", "L", "beta", "d", "eta", "lam"),
    "synch_div_lip": ("w1_0", "L", "t"),
    "synch_div_diss": ("mu_2", "M", "m", "b", "beta", "d", "t"),
    "disc_err_lip": ("eta", "lam", "M", "L", "sigma1", "beta", "d"),
    "disc_err_diss": ("eta", "M", "m", "b", "beta", "d", "mu_2"),
    "gradient_origin": ("M", "m", "b"),
    "minima_radius": ("m", "b"),
    "stability_continuity_lip": ("L", "w1"),
    "stability_continuity_diss": ("M", "m", "b", "phi", "eps", "R", "w_rho"),
}


def analytic_lemma_bounds(kind: str, **params) -> float:
    """Evaluate one lemma-level closed form.

    Kinds and their meaning:

    * ``moment_cts``: bound on ``E||theta_t||^p`` for the frozen-batch diffusion
    * ``first_moment_disc``: bound on ``E||x_t||`` for SGLD with weight decay
    * ``synch_div_lip`` / ``synch_div_diss``: synchronous-coupling divergence
      (``E||theta_t - hat theta_t||`` resp. ``E||theta_t - theta_0||^2``)
    * ``disc_err_lip``: bound on the one-step ``W_1`` discretization error
    * ``disc_err_diss``: bound on the squared one-step ``W_2`` discretization error
    * ``gradient_origin``, ``minima_radius``: ``M sqrt(b/m)`` and ``sqrt(b/m)``
    * ``stability_continuity_*``: Wasserstein-to-stability transfer
    """
    if kind not in _LEMMA_PARAMS:
        raise ValueError(f"unknown lemma bound {kind!r}")
    missing = [k for k in _LEMMA_PARAMS[kind] if params.get(k) is None]
    if missing:
        raise ValueError(f"{kind} needs {', '.join(missing)}")
    P = params
    if kind == "moment_cts":
        p, m, t = P["p"], P["m"], P["t"]
        decay = math.exp(-p * m * t / 2.0)
        level = (2 * P["b"] / m + 2 * (p + P["d"] - 2) / (P["beta"] * m)) ** (p / 2.0)
        return P["mu_p"] * decay + level * (1.0 - decay)
    if kind == "first_moment_disc":
        return P["mu_1"] + (P["L"] + math.sqrt(2 * P["d"] / (P["beta"] * P["eta"]))) / P["lam"]
    if kind == "synch_div_lip":
        return P["w1_0"] + 2 * P["L"] * P["t"]
    if kind == "synch_div_diss":
        M, m, b, beta, d, t = (P[k] for k in ("M", "m", "b", "beta", "d", "t"))
        return 4 * M**2 * (P["mu_2"] + (3 * b + 2 * d / beta) / m) * t**2 + 4 * d / beta * t
    if kind == "disc_err_lip":
        eta, lam, M, L = P["eta"], P["lam"], P["M"], P["L"]
        inner = eta * (lam * P["sigma1"] + 2 * L) + 2 * math.sqrt(2 * P["d"] * eta / P["beta"])
        return eta * (lam + M) * inner * math.exp(M + 1)
    if kind == "disc_err_diss":
        eta, M, m, b = P["eta"], P["M"], P["m"], P["b"]
        return 8 * eta**3 * math.exp(2 * eta**2 * M**2) * M**2 * (
            M**2 * P["mu_2"] + M**2 * b / m + P["d"] / P["beta"])
    if kind == "gradient_origin":
        return P["M"] * math.sqrt(P["b"] / P["m"])
    if kind == "minima_radius":
        return math.sqrt(P["b"] / P["m"])
    if kind == "stability_continuity_lip":
        return P["L"] * P["w1"]
    return P["M"] * (P["b"] / P["m"] + 1) / (P["phi"] * P["eps"] * max(P["R"], 1.0)) * P["w_rho"]


def stability_to_gen(eps_stab: float) -> float:
    """A uniform-stability level bounds the expected generalization gap by itself."""
    if eps_stab < 0:
        raise ValueError("stability level must be non-negative")
    return eps_stab


@dataclass(frozen=True)
class BoundCurve:
    t_values: tuple
    bound_values: tuple
    kind: str

    def __post_init__(self):
        if len(self.t_values) != len(self.bound_values):
            raise ValueError("t grid and values must align")
