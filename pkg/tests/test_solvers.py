import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shum.calculus import assemble_biharmonic
from shum.mesh import Mesh
from shum.noise_tree import AdaptedField, NoiseTree, expectation
from shum.solvers import (
    CoefficientField, ControlPair, SchemeConfig, duality_gap, solve_backward, solve_forward,
)


def cfg_for(N=6, K=4, T=1.0, a1=0.0, a2=0.0, G0=(0.3, 0.7)):
    return SchemeConfig.build(Mesh(N), NoiseTree(K, T), a1, a2, G0)


def random_controls(cfg, rng):
    tr, N = cfg.tree, cfg.mesh.N
    u = AdaptedField(tr, [cfg.chi * rng.standard_normal((tr.n_nodes(k), N)) for k in range(tr.K)])
    v = AdaptedField(tr, [rng.standard_normal((tr.n_nodes(k), N)) for k in range(tr.K)])
    return ControlPair(u, v)


def test_coefficient_field_sampling_and_norm():
    m, tr = Mesh(5), NoiseTree(3, 1.5)
    cf = CoefficientField.sample(lambda t, x: t + x, -2.0, m, tr)
    assert cf.a1.shape == (3, 5)
    assert np.allclose(cf.a1[:, 0], tr.times[:-1] + m.h)
    assert cf.H_norm == pytest.approx(np.abs(cf.a1).max() + 2.0)
    with pytest.raises(ValueError):
        CoefficientField(np.array([[np.nan]]), np.zeros((1, 1)))


def test_system_factorization_is_spd():
    cfg = cfg_for(N=9, K=5)
    assert np.allclose(cfg.system, cfg.system.T)
    assert np.linalg.eigvalsh(cfg.system).min() >= 1.0 - 1e-12
    b = np.random.default_rng(0).standard_normal(9)
    assert np.linalg.norm(cfg.system @ cfg.solve(b) - b) <= 1e-11 * np.linalg.norm(b)


def test_zero_preservation():
    cfg = cfg_for()
    y = solve_forward(np.zeros(6), ControlPair.zeros(cfg.tree, 6), cfg)
    assert all(not np.any(lv) for lv in y.levels)
    z, m, zeta = solve_backward(np.zeros((16, 6)), cfg)
    assert all(not np.any(lv) for f in (z, m, zeta) for lv in f.levels)


def test_single_step_matches_dense_solve():
    cfg = cfg_for(N=7, K=1, T=0.3)
    y0 = np.sin(np.pi * cfg.mesh.M.points)
    A = assemble_biharmonic(cfg.mesh).matrix
    expected = np.linalg.solve(np.eye(7) + 0.3 * A, y0)
    y = solve_forward(y0, None, cfg)
    assert np.allclose(y.leaf, expected[None, :], rtol=1e-13, atol=1e-15)


def test_noise_cancels_in_expectation():
    cfg = cfg_for(N=7, K=1, a1=0.8)
    y0 = np.cos(3 * cfg.mesh.M.points)
    rng = np.random.default_rng(1)
    u = AdaptedField(cfg.tree, [cfg.chi * rng.standard_normal((1, 7))])
    v = AdaptedField(cfg.tree, [rng.standard_normal((1, 7))])
    y = solve_forward(y0, ControlPair(u, v), cfg)
    det = cfg.solve((1 + cfg.tree.dt * 0.8) * y0 + cfg.tree.dt * cfg.chi * u[0][0])
    assert np.allclose(expectation(y.leaf), det, rtol=1e-13, atol=1e-15)


def test_backward_deterministic_terminal_data():
    cfg = cfg_for(N=6, K=4)
    prof = np.sin(np.pi * cfg.mesh.M.points)
    z, m, zeta = solve_backward(np.tile(prof, (16, 1)), cfg)
    assert all(np.abs(lv).max() < 1e-15 for lv in zeta.levels)
    S = np.linalg.inv(cfg.system)
    for k in range(5):
        expected = np.linalg.matrix_power(S, 4 - k) @ prof
        assert np.allclose(z[k], expected[None, :], rtol=1e-12, atol=1e-15)


def test_backward_two_leaf_hand_algebra():
    cfg = cfg_for(N=5, K=1, T=0.25)
    c = np.linspace(1, 2, 5)
    z, m, zeta = solve_backward(np.stack([c, -c]), cfg)
    assert np.allclose(m[0], 0.0, atol=1e-15)
    assert np.allclose(zeta[0][0], cfg.solve(c / np.sqrt(0.25)), rtol=1e-14)


def test_duality_examples():
    cfg = cfg_for(a1=1.0, a2=0.5)
    assert duality_gap(np.zeros(6), np.zeros((16, 6)), None, cfg) == 0.0
    rng = np.random.default_rng(4)
    y0, zT = rng.standard_normal(6), rng.standard_normal((16, 6))
    assert abs(duality_gap(y0, zT, None, cfg)) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), a1=st.floats(-3, 3), a2=st.floats(-3, 3))
def test_duality_gap_random(seed, a1, a2):
    cfg = cfg_for(a1=lambda t, x: a1 * np.cos(x + t), a2=a2)
    rng = np.random.default_rng(seed)
    y0, zT = rng.standard_normal(6), rng.standard_normal((16, 6))
    gap = duality_gap(y0, zT, random_controls(cfg, rng), cfg)
    assert abs(gap) <= 1e-10 * max(1.0, np.abs(zT).max() * np.abs(y0).max())


@pytest.mark.parametrize("K", [1, 4, 8])
def test_uncontrolled_energy_non_increasing(K):
    cfg = cfg_for(N=9, K=K)
    y = solve_forward(np.random.default_rng(K).standard_normal(9), None, cfg)
    e = [cfg.leaf_inner(lv, lv) for lv in y.levels]
    assert all(b <= a * (1 + 1e-14) for a, b in zip(e, e[1:]))


def test_control_support_check():
    cfg = cfg_for()
    ctl = random_controls(cfg, np.random.default_rng(0))
    assert ctl.check_support(cfg.chi)
    ctl.u.levels[0][0, 0] = 1.0
    assert not ctl.check_support(cfg.chi)


def test_shape_errors():
    cfg = cfg_for()
    with pytest.raises(ValueError):
        solve_forward(np.zeros(5), None, cfg)
    with pytest.raises(ValueError):
        solve_backward(np.zeros((8, 6)), cfg)
