import numpy as np
import pytest

from strongenv import verification as vf
from strongenv.engine import direct_recursion, doob_meyer, penalized_envelope, strong_envelope
from strongenv.instances import Instance
from strongenv.suite import random_in_k, random_pair, random_sandwich, verify_instance
from strongenv.tree import StoppingTime, TimeGrid

from conftest import instances


def at(tree, k):
    return StoppingTime.at_level(tree, k)


@pytest.fixture
def f1_env(f1):
    tree, grid, x = f1
    res = strong_envelope(tree, grid, x)
    return tree, grid, x, res.U, res.A


def test_skorohod_examples(f1_env):
    tree, grid, x, u, a = f1_env
    assert vf.skorohod_residual(tree, grid, u, a, u, x) == 0.0
    # (3-1)*0 + (3-3)*1 + (2-2)*2
    assert vf.skorohod_residual(tree, grid, u, a, x, x) == 0.0
    with pytest.raises(ValueError, match="sandwich"):
        vf.skorohod_residual(tree, grid, u, a, x - 1, x)


def test_complementarity_examples(f1_env, f2):
    tree, grid, x, u, a = f1_env
    assert vf.complementarity_check(tree, grid, u, a, x).passed
    shifted = vf.complementarity_check(tree, grid, u + 1, a, x)
    assert not shifted.passed and "'0'" in shifted.witness
    # U + 1 at the root only: A now grows at the root where U' - X = 3
    bumped = u.copy()
    bumped[0] += 1
    _, a_b = doob_meyer(tree, bumped)
    rep = vf.complementarity_check(tree, grid, bumped, a_b, x)
    assert not rep.passed and rep.worst_residual == 3.0 and "''" in rep.witness
    t2, g2, x2 = f2
    u2 = direct_recursion(t2, g2, x2)
    assert vf.complementarity_check(t2, g2, u2, doob_meyer(t2, u2)[1], x2).passed


def test_beta1_negative_control(f1_env):
    tree, grid, x, _, _ = f1_env
    u1 = penalized_envelope(tree, grid, x, 1.0)
    _, a1 = doob_meyer(tree, u1)
    assert not vf.complementarity_check(tree, grid, u1, a1, x).passed
    dom = vf.domination_check(tree, grid, u1, x)
    assert not dom.passed and dom.worst_residual == 1.0


def test_svi_examples(f1_env):
    tree, grid, x, u, a = f1_env
    vals, low = vf.svi_residual(tree, grid, u, u, at(tree, 0), at(tree, 2))
    assert low == 0.0
    # (3-1)(3-3) + (3-3)(2-3)
    assert vf.svi_residual(tree, grid, u, x, at(tree, 0), at(tree, 2), x)[1] == 0.0
    # (-1)(0) + (-1)(-1)
    assert vf.svi_residual(tree, grid, u, u + 1, at(tree, 0), at(tree, 2), x)[1] == 1.0
    with pytest.raises(ValueError, match="tau1"):
        vf.svi_residual(tree, grid, u, u, at(tree, 2), at(tree, 0))
    with pytest.raises(ValueError, match="K"):
        vf.svi_residual(tree, grid, u, x - 1, at(tree, 0), at(tree, 2), x)


def test_uniqueness_identity_examples(f1_env):
    tree, grid, x, u, a = f1_env
    rep = vf.uniqueness_identity_check(tree, u, u, at(tree, 0), at(tree, 3))
    assert rep.passed and rep.worst_residual == 0.0
    u1 = penalized_envelope(tree, grid, x, 1.0)
    # D = U - U^1 = (1, 1, 1, 0): D_3^2 - D_0^2 = -1; 2*sum D dD = 2*(0 + 0 - 1) = -2; [D] = 1
    assert vf.uniqueness_identity_check(tree, u, u1, at(tree, 0), at(tree, 3)).passed


def test_uniqueness_identity_random_pairs():
    rng = np.random.default_rng(7)
    for seed, inst in instances(100):
        tree = inst.tree
        for _ in range(5):
            y, y2 = rng.normal(size=(2, tree.n_nodes)) * rng.uniform(0.1, 10)
            t1, t2 = random_pair(inst, rng, direct_recursion(tree, inst.grid, inst.obstacle), False)
            assert vf.uniqueness_identity_check(tree, y, y2, t1, t2).passed


def test_apriori_examples(f1_env):
    tree, grid, x, u, a = f1_env
    rep = vf.apriori_increment_check(tree, grid, x, u, a, at(tree, 0), at(tree, 2), 0.5)
    # LHS 1 vs RHS (3 - 2) + 0.5
    assert rep.passed and rep.worst_residual == -0.5
    assert vf.apriori_increment_check(tree, grid, x, u, a, at(tree, 1), at(tree, 1), 0.5).passed
    lp = vf.apriori_lp_check(tree, grid, x, a, at(tree, 0), at(tree, 2), 1)
    assert lp.passed and lp.worst_residual == 0.0
    flat = vf.apriori_lp_check(tree, grid, x, a, at(tree, 0), at(tree, 1), 2)
    assert flat.passed
    with pytest.raises(ValueError):
        vf.apriori_lp_check(tree, grid, x, a, at(tree, 0), at(tree, 1), 0.5)


def test_apriori_rejects_zero_weight_stops(f2):
    tree, grid, x = f2
    u = direct_recursion(tree, grid, x)
    _, a = doob_meyer(tree, u)
    with pytest.raises(ValueError, match="zero-weight"):
        vf.apriori_lp_check(tree, grid, x, a, at(tree, 0), at(tree, 1), 1)


def test_apriori_supermartingale_obstacle():
    for seed, inst in instances(30):
        tree = inst.tree
        full = TimeGrid(inst.grid.times, tuple(1.0 for _ in inst.grid.weights))
        x = direct_recursion(tree, full, inst.obstacle)
        _, a = doob_meyer(tree, x)
        rng = np.random.default_rng(seed)
        s1, s2 = random_pair(inst, rng, x)
        assert vf.apriori_increment_check(tree, full, x, x, a, s1, s2, 1e-3).passed


def test_stability_examples(f1):
    tree, grid, x = f1
    rep = vf.stability_check(tree, grid, x, x, at(tree, 0), at(tree, 3))
    assert rep.passed and rep.worst_residual <= 0
    shifted = x.copy()
    shifted[1] += 0.1
    assert vf.stability_check(tree, grid, x, shifted, at(tree, 0), at(tree, 3)).passed
    assert vf.stability_check(tree, grid, x, shifted, at(tree, 1), at(tree, 2)).passed


def test_monotone_convergence_examples(f1):
    tree, grid, x = f1
    rep = vf.monotone_convergence_check(tree, grid, x, 8, ns=[1, 2, 4, 8])
    assert rep.passed
    const = np.where(tree.is_cemetery, 0, 2.0)
    assert vf.monotone_convergence_check(tree, grid, const, 16).passed
    with pytest.raises(ValueError):
        vf.monotone_convergence_check(tree, grid, x, 1)


def test_sampled_processes_respect_constraints():
    for seed, inst in instances(20):
        rng = np.random.default_rng(seed)
        tree, grid, x = inst.tree, inst.grid, inst.obstacle
        u = direct_recursion(tree, grid, x)
        w = grid.weighted_nodes(tree)
        xs = random_sandwich(inst, rng, u)
        assert np.all(xs[w] >= x[w]) and np.all(xs <= u + 1e-15)
        v = random_in_k(inst, rng, u)
        assert np.all(v[w] >= x[w])
        t1, t2 = random_pair(inst, rng, u)
        assert t1.precedes(t2)
        assert np.all(grid.stop_eligible(tree)[t2.hit])


def test_suite_on_fixture(f1):
    reports = verify_instance(Instance(*f1), np.random.default_rng(0))
    failed = [r for r in reports if not r.passed]
    assert not failed, failed
    names = {r.name for r in reports}
    assert {"skorohod", "svi", "stability", "oracle_enumeration", "negative_control_shift"} <= names
