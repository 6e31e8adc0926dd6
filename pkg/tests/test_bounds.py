import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgldstab.bounds import (BoundCurve, analytic_lemma_bounds, contraction_mixture, ctilde,
                             dissipative_constants, dissipative_gen_bound, lipschitz_constants,
                             lipschitz_gen_bound, recursion_envelope, stability_to_gen)


def test_lipschitz_golden_convex():
    c = lipschitz_constants(L=1.0, M=1.0, lam=2.0, beta=2.0)
    assert c.convex and c.c3 == 8.0 and c.C1 == 8.0
    assert c.R0 == 0.0 and c.phi_min == 1.0


def test_lipschitz_golden_nonconvex():
    c = lipschitz_constants(L=1.0, M=2.0, lam=1.0, beta=2.0)
    assert not c.convex
    assert c.c1 == pytest.approx(math.exp(4.0), rel=1e-9)
    assert c.c2 == 24.0
    assert c.C1 == pytest.approx(1310.36, abs=0.01)
    assert c.C1 == pytest.approx(24.0 * math.exp(4.0), rel=1e-12)
    assert c.a == 2.0 and c.b_rate == 1.0 and c.R_kappa == 4.0
    assert c.phi_min == pytest.approx(math.exp(-2.0 * 16.0 / 8.0))
    assert c.R1_tilde == pytest.approx(2.0 + math.sqrt(4.0 + 8.0))


def test_lipschitz_branch_boundary_is_convex():
    c = lipschitz_constants(L=0.5, M=1.5, lam=1.5, beta=3.0)
    assert c.convex and c.C1 == c.c3 and c.c1 == 1.0


def test_c2_variants():
    c = lipschitz_constants(L=1.0, M=2.0, lam=1.0, beta=2.0, sigma1=0.0)
    assert c.C2 == pytest.approx(4.0 * math.exp(4.0))
    assert c.C2_min == 4.0
    strict = lipschitz_constants(L=1.0, M=2.0, lam=1.0, beta=2.0, min_variant=True)
    assert strict.C2 == 4.0
    expected_c3 = 4.0 * math.exp(4.0) * (1.0 + 3.0 * (0.0 + 2.0 + 2.0))
    assert c.C3 == pytest.approx(expected_c3)


@pytest.mark.parametrize("bad", [dict(L=0.0), dict(M=-1.0), dict(lam=0.0), dict(beta=0.0)])
def test_lipschitz_rejects_non_positive(bad):
    kw = dict(L=1.0, M=1.0, lam=1.0, beta=1.0) | bad
    with pytest.raises(ValueError):
        lipschitz_constants(**kw)


def test_lipschitz_constants_positive():
    c = lipschitz_constants(L=2.0, M=3.0, lam=0.7, beta=0.5, sigma1=1.0)
    assert c.c1 >= 1.0
    for v in (c.c1, c.c2, c.c3, c.C1, c.C2, c.C3, c.phi_min, c.R1_tilde):
        assert v > 0


def test_dissipative_golden():
    c = dissipative_constants(M=1.0, m=1.0, b=1.0, d=1, beta=1.0)
    assert c.R == pytest.approx(2.0 * math.sqrt(5.0), abs=1e-12)
    assert c.phi == pytest.approx(0.5 * math.exp(-10.0 - 4.0 * math.sqrt(5.0)), rel=1e-12)
    assert c.phi == pytest.approx(2.95e-9, rel=0.01)
    assert c.eps == pytest.approx(c.phi / (20.0 * 3.0))
    assert c.eps < 1
    assert c.c_tilde_4 == pytest.approx(1.0 + (2.0 * c.R / c.phi) * max(c.eps * c.R, 1.0))
    assert c.continuity == pytest.approx(2.0 / (c.phi * c.eps * c.R))
    for v in (c.R, c.phi, c.eps, c.C4, c.c_tilde_2, c.c_tilde_4, c.c_tilde_5, c.continuity):
        assert v > 0


def test_dissipative_eps_clamp():
    # a tiny radius drives phi / (R^2 (...)) above 1
    c = dissipative_constants(M=1e3, m=1e3, b=0.0, d=1, beta=1e-6)
    assert c.R < 0.1
    assert c.eps == 1.0


def test_dissipative_sigma_inputs_and_errors():
    base = dissipative_constants(M=1.0, m=1.0, b=1.0, d=1, beta=1.0)
    more = dissipative_constants(M=1.0, m=1.0, b=1.0, d=1, beta=1.0, sigma2=1.0, sigma4=1.0)
    assert more.C5 > base.C5 and more.C6 > base.C6
    with pytest.raises(ValueError):
        dissipative_constants(M=1.0, m=0.0, b=1.0, d=1, beta=1.0)
    with pytest.raises(ValueError):
        dissipative_constants(M=1.0, m=1.0, b=1.0, d=1, beta=1.0, sigma2=-1.0)


def test_ctilde():
    assert ctilde(1, 1.0, 1.0, 1.0, 1, 1.0) == 65.0
    assert ctilde(1, 1.0, 1.0, 2.0, 1, 1.0) > 65.0
    assert ctilde(2, 1.0, 1.0, 2.0, 1, 1.0) > ctilde(2, 1.0, 1.0, 1.0, 1, 1.0)
    ratio = ctilde(2, 1.0, 1.0, 1.0, 1, 1.0) / 65.0
    assert math.isfinite(ratio) and ratio > 0
    with pytest.raises(ValueError):
        ctilde(0, 1.0, 1.0, 1.0, 1, 1.0)
    with pytest.raises(ValueError):
        ctilde(1.5, 1.0, 1.0, 1.0, 1, 1.0)


def test_lipschitz_gen_bound_examples():
    c = lipschitz_constants(L=1.0, M=1.0, lam=2.0, beta=2.0, sigma1=1.0)
    assert lipschitz_gen_bound(c, 64, 8, 0.1, 0, 2) == 0.0
    assert lipschitz_gen_bound(c, 64, 8, 0.1, 0, 2, continuous=False) == 0.0
    # k = n keeps growing linearly
    assert lipschitz_gen_bound(c, 8, 8, 0.1, 2000, 2) == pytest.approx(c.C2 * 200.0)
    # the plateau halves when n doubles at fixed k, up to the n / (n - k) factor
    p1 = lipschitz_gen_bound(c, 64, 8, 0.1, 1e6, 2)
    p2 = lipschitz_gen_bound(c, 128, 8, 0.1, 1e6, 2)
    assert p1 == pytest.approx(c.C2 * (c.C1 + 1) * 8 / 56)
    assert p2 / p1 == pytest.approx(0.5 * (56 / 64) / (120 / 128))
    assert lipschitz_gen_bound(c, 64, 8, 0.1, 1e6, 2) == lipschitz_gen_bound(c, 64, 8, 0.1, 1e7, 2)


def test_lipschitz_gen_bound_errors():
    c = lipschitz_constants(L=1.0, M=1.0, lam=2.0, beta=2.0)
    with pytest.raises(ValueError):
        lipschitz_gen_bound(c, 4, 5, 0.1, 1, 2)
    with pytest.raises(ValueError):
        lipschitz_gen_bound(c, 4, 2, 0.1, -1, 2)
    with pytest.raises(ValueError):
        lipschitz_gen_bound(c, 4, 2, 1.0, 1, 2)
    with pytest.raises(ValueError):
        lipschitz_gen_bound(c, 4, 2, 0.1, 1, 2, continuous=False)  # no sigma1
    c1 = lipschitz_constants(L=1.0, M=1.0, lam=20.0, beta=2.0, sigma1=0.0)
    with pytest.raises(ValueError):
        lipschitz_gen_bound(c1, 4, 2, 0.1, 1, 2, continuous=False)  # eta >= 1/lambda


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 200), st.floats(0.001, 0.9), st.floats(0, 1e4), st.floats(0, 1e4),
       st.booleans())
def test_lipschitz_gen_bound_monotone_in_t(n, eta, t1, t2, cont):
    c = lipschitz_constants(L=1.0, M=2.0, lam=1.0, beta=2.0, sigma1=0.5)
    k = max(1, n // 4)
    lo, hi = min(t1, t2), max(t1, t2)
    assert lipschitz_gen_bound(c, n, k, eta, lo, 1, cont) <= lipschitz_gen_bound(c, n, k, eta, hi,
                                                                                  1, cont)


def test_dissipative_gen_bound_examples():
    c = dissipative_constants(M=1.0, m=1.0, b=1.0, d=1, beta=1.0)
    assert dissipative_gen_bound(c, 32, 4, 0.1, 0) == 0.0
    # eta -> 0 at fixed positive horizon in time: the eta^{-1/2} factor blows up
    vals = [dissipative_gen_bound(c, 32, 4, eta, 1.0 / eta) for eta in (1e-2, 1e-4, 1e-6)]
    assert vals[0] < vals[1] < vals[2]
    with pytest.raises(ValueError):
        dissipative_gen_bound(c, 32, 0, 0.1, 1)
    with pytest.raises(ValueError):
        dissipative_gen_bound(c, 32, 4, 0.6, 1, continuous=False)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1e5), st.floats(0, 1e5))
def test_dissipative_gen_bound_monotone_in_t(t1, t2):
    c = dissipative_constants(M=1.0, m=0.5, b=0.5, d=2, beta=1.0)
    lo, hi = min(t1, t2), max(t1, t2)
    assert dissipative_gen_bound(c, 64, 8, 0.05, lo) <= dissipative_gen_bound(c, 64, 8, 0.05, hi)


def test_contraction_mixture_and_envelope():
    assert contraction_mixture(1.0, 0.1, 10, 10) == 1.0
    assert contraction_mixture(2.0, 0.2, 10, 5) == pytest.approx(0.5 + 0.5 * math.exp(-0.1))
    assert recursion_envelope(1.0, 0.3, 10) == pytest.approx(3.0)
    assert recursion_envelope(0.5, 1.0, 3) == pytest.approx(1.75)
    w = 0.0
    for _ in range(25):
        w = 0.9 * w + 0.2
    assert recursion_envelope(0.9, 0.2, 25) == pytest.approx(w)


def test_lemma_bound_examples():
    assert analytic_lemma_bounds("moment_cts", p=2, mu_p=0.0, m=1.0, b=1.0, beta=2.0, d=2,
                                 t=1e9) == pytest.approx(4.0)
    assert analytic_lemma_bounds("moment_cts", p=2, mu_p=3.5, m=1.0, b=1.0, beta=2.0, d=2,
                                 t=0.0) == 3.5
    assert analytic_lemma_bounds("synch_div_lip", w1_0=0.0, L=1.0, t=0.5) == 1.0
    assert analytic_lemma_bounds("gradient_origin", M=2.0, m=1.0, b=4.0) == 4.0
    assert analytic_lemma_bounds("minima_radius", m=1.0, b=4.0) == 2.0
    assert analytic_lemma_bounds("synch_div_diss", mu_2=1.0, M=1.0, m=1.0, b=1.0, beta=1.0, d=1,
                                 t=0.0) == 0.0
    assert analytic_lemma_bounds("first_moment_disc", mu_1=1.0, L=1.0, beta=2.0, d=1, eta=1.0,
                                 lam=1.0) == pytest.approx(3.0)


def test_discretization_bounds_scale():
    kw = dict(M=1.0, m=0.5, b=0.5, beta=1.0, d=1, mu_2=1.0)
    small = analytic_lemma_bounds("disc_err_diss", eta=0.05, **kw)
    big = analytic_lemma_bounds("disc_err_diss", eta=0.1, **kw)
    assert big / small == pytest.approx(8.0 * math.exp(2 * (0.01 - 0.0025)), rel=1e-12)
    lip = dict(lam=0.5, M=1.0, L=1.0, sigma1=1.0, beta=1.0, d=1)
    assert analytic_lemma_bounds("disc_err_lip", eta=0.0, **lip) == 0.0


def test_stability_transfer():
    assert stability_to_gen(0.0) == 0.0
    assert stability_to_gen(0.3) == 0.3
    w = analytic_lemma_bounds("stability_continuity_lip", L=2.0, w1=0.15)
    assert stability_to_gen(w) == 0.3
    with pytest.raises(ValueError):
        stability_to_gen(-0.1)
    c = dissipative_constants(M=1.0, m=1.0, b=1.0, d=1, beta=1.0)
    v = analytic_lemma_bounds("stability_continuity_diss", M=1.0, m=1.0, b=1.0, phi=c.phi,
                              eps=c.eps, R=c.R, w_rho=1.0)
    assert v == pytest.approx(c.continuity)


def test_lemma_bound_errors():
    with pytest.raises(ValueError):
        analytic_lemma_bounds("moment_cts", p=2)
    with pytest.raises(ValueError):
        analytic_lemma_bounds("nonsense")


def test_bound_curve_alignment():
    BoundCurve((0, 1), (0.0, 1.0), "moment")
    with pytest.raises(ValueError):
        BoundCurve((0, 1), (0.0,), "moment")
