import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bose_phonon_kinetics.collision import (EIGHT_PI_SQ, CollisionTables, apply_pair,
                                            apply_strong, collision_bracket,
                                            dissipation_summands, entropy_dissipation,
                                            equilibrium_residual, gain, kernel, kernel0,
                                            loss_frequency, loss_rate, strong_terms,
                                            weak_pairing)
from bose_phonon_kinetics.diagnostics import linear_identity_check, quadratic_bound_check
from bose_phonon_kinetics.grid import (GridMismatchError, RadialFunction, RadialGrid,
                                       bose_einstein, node_mass)

from conftest import random_state


def test_kernel_examples():
    assert kernel(1, 1) == 4
    assert kernel(2, 3) == 900
    assert kernel(5.0, 0.0) == 0.0


@given(st.floats(0, 50), st.floats(0, 50))
def test_kernel_symmetry(x, y):
    assert kernel(x, y) == kernel(y, x)
    assert kernel(x, y) == pytest.approx(kernel0(x + y, x, y), rel=1e-14)


def test_tables_layout(tables128):
    t = tables128
    n = t.grid.n
    assert t.n_pairs == (n - 1) * n // 2
    assert np.all(t.s <= n) and np.all(t.j >= 1) and np.all(t.l >= 1)
    w = t.weight_matrix()
    assert np.array_equal(w, w.T)
    assert np.all(w[0] == 0) and np.all(w[:, 0] == 0)
    assert t.node_mass[0] == 0 and np.all(t.node_mass[1:-1] > 0)


def test_bracket_examples():
    g = RadialGrid(10, 10.0)
    assert collision_bracket(g.zeros(), 2, 3) == 0.0
    v = np.zeros(11)
    v[2], v[3], v[5] = 2.0, 3.0, 1.0
    assert collision_bracket(RadialFunction(g, v), 2, 3) == 0.0
    v[5] = 2.0
    assert collision_bracket(RadialFunction(g, v), 2, 3) == -6.0
    with pytest.raises(IndexError):
        collision_bracket(g.zeros(), 5, 6)
    with pytest.raises(IndexError):
        collision_bracket(g.zeros(), 0, 3)


def test_bracket_vanishes_on_be_at_ln2():
    # nodes at multiples of ln 2: f_1 = f_1 = 1, f_2 = 1/3
    g = RadialGrid(4, 4 * math.log(2))
    be = bose_einstein(g, 1.0)
    assert collision_bracket(be, 1, 1) == pytest.approx(0.0, abs=1e-15)


def test_apply_pair_zero_and_mismatch(tables128):
    out = apply_pair(tables128.grid.zeros(), tables128)
    assert np.all(out.rate == 0) and np.all(out.point_rate == 0)
    with pytest.raises(GridMismatchError):
        apply_pair(RadialGrid(64, 10.0).zeros(), tables128)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_be_is_annihilated(tables128, alpha):
    resid, scale = equilibrium_residual(bose_einstein(tables128.grid, alpha), tables128)
    assert resid <= 1e-10 * scale


def test_energy_conserved_exactly(tables128):
    rng = np.random.default_rng(1)
    for _ in range(10):
        f = RadialFunction(tables128.grid, random_state(tables128.grid, rng, 5.0, 0.3))
        q = apply_pair(f, tables128).rate
        r = tables128.grid.nodes
        assert abs(np.dot(q, r)) <= 1e-13 * np.dot(np.abs(q), r)
        assert abs(weak_pairing(f, r, tables128)) <= 1e-13 * np.dot(np.abs(q), r)


def test_weak_pairing_identities(tables128):
    rng = np.random.default_rng(2)
    g = tables128.grid
    f = RadialFunction(g, random_state(g, rng))
    phi = rng.standard_normal(g.n_nodes)
    q = apply_pair(f, tables128).rate
    assert weak_pairing(f, phi, tables128) == pytest.approx(np.dot(q, phi), rel=1e-12)
    assert weak_pairing(f, np.ones(g.n_nodes), tables128) == pytest.approx(q.sum(), rel=1e-12)
    be = bose_einstein(g, 1.0)
    _, scale = equilibrium_residual(be, tables128)
    assert abs(weak_pairing(be, phi, tables128)) <= 1e-10 * scale * np.abs(phi).sum()


def test_strong_matches_pair(tables128):
    rng = np.random.default_rng(3)
    g = tables128.grid
    for _ in range(5):
        f = RadialFunction(g, random_state(g, rng, 3.0, 0.2))
        strong = apply_strong(f)
        pr = apply_pair(f, tables128).point_rate
        induced = np.zeros_like(pr)
        induced[1:] = pr[1:] * 4 * math.pi * g.nodes[1:] ** 2
        scale = np.abs(induced).max()
        assert np.abs(strong[1:] - induced[1:]).max() <= 1e-10 * scale


def test_strong_terms_structure(grid128):
    terms = strong_terms(grid128.zeros())
    assert sorted(terms) == sorted([f"B{i}" for i in range(1, 10)] + ["L1", "L2", "L3"])
    assert all(np.all(t == 0) for t in terms.values())
    assert np.all(apply_strong(grid128.zeros()) == 0)


def test_strong_be_residual(tables256):
    be = bose_einstein(tables256.grid, 1.0)
    terms = strong_terms(be)
    scale = max(np.abs(t).max() for t in terms.values())
    assert np.abs(apply_strong(be)).max() <= 1e-10 * scale


def test_loss_frequency_spontaneous_part():
    g = RadialGrid(400, 4.0)
    t = CollisionTables(g)
    nu = loss_frequency(g.zeros(), t)
    r = g.nodes
    assert nu[0] == 0
    # exact polynomial integral r^7/30, up to the trapezoid error
    assert np.allclose(nu[1:], r[1:] ** 7 / 30, rtol=10 * g.spacing ** 2)


def test_loss_frequency_bound():
    g = RadialGrid(512, 30.0)
    t = CollisionTables(g)
    f = g.sample(lambda r: np.exp(-r))
    nu = loss_frequency(f, t)
    r = g.nodes
    m2, m4 = 2.0, 24.0
    assert np.all(nu <= 4 * r ** 4 * m2 + 4 * r ** 2 * m4 + 4 * r ** 7)
    assert np.all(nu >= 0)


def test_gain_split(tables128):
    rng = np.random.default_rng(4)
    g = tables128.grid
    assert np.all(gain(g.zeros(), tables128) == 0)
    f = RadialFunction(g, random_state(g, rng, 2.0, 0.3))
    out = apply_pair(f, tables128)
    lam = loss_rate(f, tables128)
    gp = gain(f, tables128, out)
    assert np.array_equal(gp - f.values * lam, out.point_rate) or np.allclose(
        gp - f.values * lam, out.point_rate, rtol=0, atol=1e-15 * np.abs(gp).max())
    scale = np.abs(f.values * lam).max()
    assert gp.min() >= -1e-13 * scale


def test_gain_detailed_balance_at_be(tables128):
    be = bose_einstein(tables128.grid, 1.0)
    gp = gain(be, tables128)
    loss = be.values * loss_rate(be, tables128)
    assert np.allclose(gp[1:], loss[1:], rtol=1e-10, atol=0)


def test_loss_rate_relation(tables128):
    f = tables128.grid.zeros()
    nu = loss_frequency(f, tables128)
    lam = loss_rate(f, tables128)
    g = tables128.grid
    assert lam[5] == pytest.approx(EIGHT_PI_SQ * g.spacing * nu[5] / node_mass(g)[5])


def test_entropy_dissipation(tables128):
    g = tables128.grid
    be = bose_einstein(g, 1.0)
    d = dissipation_summands(be, tables128, floor=True)
    assert abs(d.sum()) <= 1e-10 * np.abs(d).max() * d.size or abs(d.sum()) < 1e-12
    hot = be.scaled(1.2)
    assert entropy_dissipation(hot, tables128, floor=True) > 0
    with pytest.raises(ValueError, match="node 3"):
        v = be.values.copy()
        v[3] = 0.0
        entropy_dissipation(RadialFunction(g, v), tables128)


def test_single_pair_sign():
    g = RadialGrid(4, 4.0)
    t = CollisionTables(g)
    v = np.array([0.0, 2.0, 3.0, 0.5, 0.1])  # f1 f2 = 6 > f3 (1 + f1 + f2) = 3
    f = RadialFunction(g, v)
    idx = np.flatnonzero((t.j == 1) & (t.l == 2))[0]
    assert collision_bracket(f, 1, 2) > 0
    assert dissipation_summands(f, t)[idx] > 0


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 20.0))
def test_dissipation_summands_nonnegative(seed, scale):
    g = RadialGrid(24, 6.0)
    t = CollisionTables(g)
    rng = np.random.default_rng(seed)
    f = RadialFunction(g, scale * rng.random(25) + 1e-12)
    d = dissipation_summands(f, t)
    assert d.min() >= -1e-13 * np.abs(d).sum()


def test_workers_bitwise_identical(tables256):
    rng = np.random.default_rng(5)
    f = RadialFunction(tables256.grid, random_state(tables256.grid, rng))
    q1 = apply_pair(f, tables256, workers=1).rate
    for w in (2, 3, 8):
        assert np.array_equal(q1, apply_pair(f, tables256, workers=w).rate)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 8))
def test_quadratic_bound(seed, k):
    g = RadialGrid(32, 6.0)
    t = CollisionTables(g)
    f = RadialFunction(g, np.random.default_rng(seed).random(33) * 3)
    ok, lhs, rhs = quadratic_bound_check(f, k, t)
    assert ok, (lhs, rhs)


@pytest.mark.parametrize("k", [2, 3, 4, 6])
def test_linear_identity(k):
    g = RadialGrid(1024, 40.0)
    t = CollisionTables(g)
    f = g.sample(lambda r: np.exp(-r))
    ok, lhs, rhs = linear_identity_check(f, k, t, rel_tol=1e-6)
    assert ok, (lhs, rhs, lhs / rhs - 1)
