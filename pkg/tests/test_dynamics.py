import math
from dataclasses import dataclass

import numpy as np
import pytest
from scipy import stats

from sgldstab.core import DataSet, LossModel, pseudo_huber, quadratic
from sgldstab.dynamics import (ChainState, InitialSpec, NoiseDraw, SgldConfig, continuous_window,
                               multistep_kernel, multistep_substeps, project_ball, run_chain,
                               sample_minibatch, sgld_step)
from sgldstab.streams import ReplicaStreams


@dataclass(frozen=True)
class ZeroDrift(LossModel):
    def grad(self, x, z):
        return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(z)))


def zero_drift(d):
    q = quadratic(d)
    return ZeroDrift(q.family, d, q.params, q.constants)


def test_sample_minibatch_full_and_errors():
    rng = np.random.default_rng(0)
    for _ in range(5):
        np.testing.assert_array_equal(sample_minibatch(4, 4, rng), [0, 1, 2, 3])
    with pytest.raises(ValueError):
        sample_minibatch(3, 4, rng)


def test_sample_minibatch_uniform_singletons():
    rng = np.random.default_rng(1)
    draws = np.array([sample_minibatch(2, 1, rng)[0] for _ in range(10_000)])
    counts = np.bincount(draws, minlength=2)
    assert abs(counts[0] / 1e4 - 0.5) <= 0.02
    assert stats.chisquare(counts).pvalue > 0.01


def test_sample_minibatch_containment_probability():
    rng = np.random.default_rng(2)
    hits = sum(4 in sample_minibatch(10, 3, rng) for _ in range(10_000))
    assert abs(hits / 1e4 - 0.3) <= 0.02


def test_sgld_step_examples():
    q = quadratic(1)
    ds = DataSet([[0.0]])
    cfg = SgldConfig(eta=0.1, beta=1.0, k=1)
    out = sgld_step(ChainState(np.array([1.0])), q, ds, cfg, NoiseDraw(np.zeros(1), np.array([0])))
    assert out.x[0] == pytest.approx(0.9, abs=1e-15) and out.step_index == 1
    # zero gradient and zero noise leave the state unchanged
    at_rest = sgld_step(ChainState(np.array([0.0])), q, ds, cfg, NoiseDraw(np.zeros(1), [0]))
    assert at_rest.x[0] == 0.0


def test_sgld_step_noise_and_weight_decay():
    q = quadratic(2)
    ds = DataSet([[1.0, 0.0], [0.0, 1.0]])
    cfg = SgldConfig(eta=0.2, beta=4.0, k=2, lam=0.5)
    x = np.array([0.3, -0.7])
    xi = np.array([0.1, 2.0])
    out = sgld_step(ChainState(x), q, ds, cfg, NoiseDraw(xi, np.array([0, 1])))
    grad = x - ds.points.mean(axis=0) + 0.5 * x
    np.testing.assert_allclose(out.x, x - 0.2 * grad + math.sqrt(2 * 0.2 / 4.0) * xi)


def test_projected_variant():
    q = zero_drift(2)
    ds = DataSet([[0.0, 0.0]])
    cfg = SgldConfig(eta=0.5, beta=1.0, k=1, variant="projected", radius=1.0)
    # noise scale is 1 here, so xi = (2, 0) lands at (2, 0) before projection
    out = sgld_step(ChainState(np.zeros(2)), q, ds, cfg, NoiseDraw(np.array([2.0, 0.0]), [0]))
    np.testing.assert_allclose(out.x, [1.0, 0.0])
    with pytest.raises(ValueError):
        SgldConfig(eta=0.1, beta=1.0, k=1, variant="projected")


def test_projection_non_expansive():
    rng = np.random.default_rng(3)
    x, y = 3 * rng.standard_normal((2, 10_000, 4))
    px, py = project_ball(x, 1.5), project_ball(y, 1.5)
    assert np.all(np.linalg.norm(px - py, axis=1) <= np.linalg.norm(x - y, axis=1) + 1e-12)


def test_anisotropic_variant():
    q = zero_drift(2)
    ds = DataSet([[0.0, 0.0]])
    sigma = np.array([[0.5, 0.0], [0.0, 0.0]])
    cfg = SgldConfig(eta=0.5, beta=1.0, k=1, variant="anisotropic", sigma=sigma)
    out = sgld_step(ChainState(np.zeros(2)), q, ds, cfg, NoiseDraw(np.array([1.0, 1.0]), [0]))
    np.testing.assert_allclose(out.x, [math.sqrt(0.5), 0.0])
    with pytest.raises(ValueError):
        SgldConfig(eta=0.1, beta=1.0, k=1, variant="anisotropic", sigma=[[1.0, 0], [0, -0.1]])
    with pytest.raises(ValueError):
        SgldConfig(eta=0.1, beta=1.0, k=1, variant="anisotropic", sigma=[[2.0, 0], [0, 1.0]])
    # tiny negative eigenvalues are clamped
    SgldConfig(eta=0.1, beta=1.0, k=1, variant="anisotropic", sigma=[[1.0, 0], [0, -1e-10]])


def test_non_finite_iterate_raises():
    q = quadratic(1)
    ds = DataSet([[0.0]])
    cfg = SgldConfig(eta=3.0, beta=1.0, k=1)
    state = ChainState(np.array([1e307]))
    with pytest.raises(FloatingPointError):
        for _ in range(10):
            state = sgld_step(state, q, ds, cfg, NoiseDraw(np.zeros(1), [0]))


def test_continuous_window_collapses_to_sgld_step():
    q = pseudo_huber(3, lam=0.3)
    rng = np.random.default_rng(4)
    ds = DataSet(rng.standard_normal((5, 3)))
    cfg = SgldConfig(eta=0.1, beta=2.0, k=2, lam=0.3, substeps_cts=1)
    xi = rng.standard_normal(3)
    batch = np.array([1, 3])
    a = sgld_step(ChainState(np.ones(3)), q, ds, cfg, NoiseDraw(xi, batch))
    b = continuous_window(ChainState(np.ones(3)), q, ds, cfg, batch, xi=xi[None])
    np.testing.assert_array_equal(a.x, b.x)


@pytest.mark.parametrize("T", [1, 8, 64])
def test_zero_drift_window_variance(T):
    q = zero_drift(1)
    ds = DataSet([[0.0]])
    cfg = SgldConfig(eta=0.2, beta=0.5, k=1, substeps_cts=T)
    rng = np.random.default_rng(T)
    xi = rng.standard_normal((4000, T, 1))
    out = continuous_window(ChainState(np.zeros((4000, 1))), q, ds, cfg, [0], xi=xi)
    var = out.x.var(ddof=1)
    # sample variance of 4000 normals has relative sd sqrt(2/3999)
    assert abs(var / (2 * 0.2 / 0.5) - 1) < 4 * math.sqrt(2 / 3999)


def test_fixed_batch_diffusion_matches_ou_second_moment():
    q = quadratic(1)
    ds = DataSet([[0.0]])
    eta, beta, x0, windows, R = 0.1, 2.0, 1.5, 20, 4000
    cfg = SgldConfig(eta=eta, beta=beta, k=1, substeps_cts=64)
    traj = run_chain(InitialSpec(x0), q, ds, cfg, windows, ReplicaStreams(5, "ou", R),
                     continuous=True)
    m2 = traj[-1, :, 0] ** 2
    t = eta * windows
    exact = math.exp(-2 * t) * x0**2 + (1 / beta) * (1 - math.exp(-2 * t))
    assert abs(m2.mean() - exact) <= 3 * m2.std(ddof=1) / math.sqrt(R) + 5e-3


def test_multistep_substeps():
    assert multistep_substeps(0.5) == 2
    assert multistep_substeps(1 / 3) == 3
    assert multistep_substeps(0.1) == 10
    with pytest.raises(ValueError):
        multistep_substeps(1.0)


def test_multistep_kernel_is_continuous_window_with_floor_substeps():
    q = quadratic(2)
    ds = DataSet([[0.5, 0.0], [0.0, -0.5]])
    cfg = SgldConfig(eta=1 / 3, beta=1.0, k=2)
    xi = np.random.default_rng(0).standard_normal((3, 2))
    a = multistep_kernel(ChainState(np.ones(2)), q, ds, cfg, None, batch=[0, 1], xi=xi)
    b = continuous_window(ChainState(np.ones(2)), q, ds, cfg, [0, 1], xi=xi, substeps=3)
    np.testing.assert_array_equal(a.x, b.x)
    # hand-rolled: 3 Euler steps of size 1/9
    x = np.ones(2)
    for j in range(3):
        x = x - (1 / 9) * (x - ds.points.mean(axis=0)) + math.sqrt(2 / 9) * xi[j]
    np.testing.assert_allclose(a.x, x, rtol=1e-14)
    with pytest.raises(ValueError):
        multistep_kernel(ChainState(np.ones(2)), q, ds, cfg, None, batch=[0, 1], xi=xi[:2])


def test_run_chain_horizon_zero_and_determinism():
    q = pseudo_huber(2, lam=0.1)
    ds = DataSet(np.random.default_rng(0).standard_normal((8, 2)))
    cfg = SgldConfig(eta=0.05, beta=1.0, k=3, lam=0.1)
    t0 = run_chain(InitialSpec(0.0, 1.0), q, ds, cfg, 0, ReplicaStreams(3, "t", 4))
    assert t0.shape == (1, 4, 2)
    a = run_chain(InitialSpec(0.0, 1.0), q, ds, cfg, 50, ReplicaStreams(3, "t", 4))
    b = run_chain(InitialSpec(0.0, 1.0), q, ds, cfg, 50, ReplicaStreams(3, "t", 4))
    assert a.tobytes() == b.tobytes()
    np.testing.assert_array_equal(a[0], t0[0])
    c = run_chain(InitialSpec(), q, ds, cfg, 5, np.random.default_rng(0))
    assert c.shape == (6, 1, 2)
    with pytest.raises(ValueError):
        run_chain(InitialSpec(), q, ds, cfg, -1, np.random.default_rng(0))


def test_stationary_mean_is_data_mean():
    q = quadratic(2)
    rng = np.random.default_rng(9)
    ds = DataSet(rng.uniform(-1, 1, (6, 2)))
    cfg = SgldConfig(eta=0.1, beta=2.0, k=6)
    traj = run_chain(InitialSpec(0.0), q, ds, cfg, 300, ReplicaStreams(1, "gibbs", 2000))
    tail = traj[-1]
    sem = tail.std(axis=0, ddof=1) / math.sqrt(tail.shape[0])
    assert np.all(np.abs(tail.mean(axis=0) - ds.points.mean(axis=0)) <= 3 * sem)


def test_initial_moments():
    assert InitialSpec(0.0).moment(3, 2) == 0.0
    assert InitialSpec((3.0, 4.0)).moment(2, 1) == 5.0
    g = InitialSpec(0.0, 2.0)
    assert g.moment(3, 2) == pytest.approx(12.0)
    assert g.moment(3, 4) == pytest.approx(3 * 5 * 16.0)
    assert g.moment(1, 1) == pytest.approx(2.0 * math.sqrt(2 / math.pi))


def test_config_validation():
    with pytest.raises(ValueError):
        SgldConfig(eta=0.0, beta=1.0, k=1)
    with pytest.raises(ValueError):
        SgldConfig(eta=0.1, beta=1.0, k=0)
    with pytest.raises(ValueError):
        SgldConfig(eta=0.1, beta=1.0, k=1, variant="kinetic")
    with pytest.raises(ValueError):
        SgldConfig(eta=0.1, beta=1.0, k=1, substeps_cts=0)
