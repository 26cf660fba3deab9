import numpy as np
import pytest
import scipy.linalg

from shum.hum import free_terminal, gramian_apply
from shum.mesh import Mesh
from shum.noise_tree import NoiseTree
from shum.observability import estimate_Cobs, observability_quotient, observation_terms
from shum.solvers import SchemeConfig, solve_backward


@pytest.fixture(scope="module")
def cfg():
    return SchemeConfig.build(Mesh(6), NoiseTree(4, 1.0), 0.0, 0.0, (0.3, 0.7))


def dense_pencil(cfg):
    n = cfg.leaf_dim
    shape = (cfg.tree.n_nodes(cfg.tree.K), cfg.mesh.N)
    L, B = np.zeros((n, n)), np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        e = e.reshape(shape)
        L[:, i] = gramian_apply(e, cfg).ravel()
        z, _, _ = solve_backward(e, cfg)
        B[:, i] = free_terminal(z[0][0], cfg).ravel()
    return L, B


def test_quotient_examples(cfg):
    zT = np.tile(np.sin(np.pi * cfg.mesh.M.points), (16, 1))
    q = observability_quotient(zT, cfg, 1e-4)
    assert np.isfinite(q) and q > 0
    assert observability_quotient(5.0 * zT, cfg, 1e-4) == pytest.approx(q, rel=1e-13)
    with pytest.raises(ValueError):
        observability_quotient(np.zeros((16, 6)), cfg, 1e-4)


def test_enlarging_G0_does_not_increase_quotient():
    mesh, tree = Mesh(8), NoiseTree(4, 1.0)
    zT = np.random.default_rng(5).standard_normal((16, 8))
    q = [observability_quotient(zT, SchemeConfig.build(mesh, tree, 0.5, 0.2, G0), 1e-3)
         for G0 in [(0.4, 0.6), (0.3, 0.7), (0.1, 0.9)]]
    assert q[0] >= q[1] >= q[2]


def test_power_iteration_matches_dense_pencil(cfg):
    eps_T = 1e-4
    rep = estimate_Cobs(cfg, eps_T)
    L, B = dense_pencil(cfg)
    top = scipy.linalg.eigh(B, L + eps_T * np.eye(cfg.leaf_dim), eigvals_only=True)[-1]
    assert rep.converged
    assert rep.quotient == pytest.approx(top, rel=1e-7)
    assert all(b >= a * (1 - 1e-9) for a, b in zip(rep.history, rep.history[1:]))
    assert rep.quotient * rep.denominator <= rep.numerator * (1 + 1e-8)
    assert rep.denominator > 0 and rep.quotient >= 0


def test_quotient_decreases_as_terminal_weight_grows(cfg):
    q = [estimate_Cobs(cfg, e).quotient for e in (1e-4, 1e-2, 1.0)]
    assert q[0] > q[1] > q[2] > 0


def test_terms_and_report_fields(cfg):
    x = np.random.default_rng(1).standard_normal((16, 6))
    num, den = observation_terms(x, cfg, 0.5)
    assert num > 0 and den > 0.5 * cfg.leaf_inner(x, x)
    rep = estimate_Cobs(cfg, 1e-2, max_iter=1)
    assert not rep.converged and rep.iterations == 1
    assert rep.bound_exponent == pytest.approx(1 + 1 + 0 + 1 + 0)
    assert rep.fitted_C == pytest.approx(np.log(rep.quotient) / 3)
    with pytest.raises(ValueError):
        estimate_Cobs(cfg, 0.0)
