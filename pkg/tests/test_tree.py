import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from strongenv.engine import direct_recursion
from strongenv.tree import (
    FiltrationTree,
    StoppingTime,
    TimeGrid,
    backward_value,
    build_tree,
    conditional_expectation,
    conditional_value_at,
    h2_norm_canonical,
    is_supermartingale,
    lp_norm,
    quadratic_variation,
    s2_norm,
    value_at_stopping_time,
)

from conftest import instances


def test_conditional_expectation_examples():
    chain = FiltrationTree.chain(1)
    assert conditional_expectation(chain, [5.0], 0) == pytest.approx([5.0])
    sym = build_tree([-1, 0, 0], [1, 0.5, 0.5])
    assert conditional_expectation(sym, [2.0, 0.0], 0)[0] == 1.0
    skew = build_tree([-1, 0, 0], [1, 0.3, 0.7])
    # hand dot product 0.3 * 10 + 0.7 * 0
    assert conditional_expectation(skew, [10.0, 0.0], 0)[0] == pytest.approx(3.0, abs=1e-12)


def test_conditional_expectation_level_out_of_range(f1):
    tree, _, x = f1
    with pytest.raises(IndexError):
        conditional_expectation(tree, x, 3)


def test_tree_validation():
    with pytest.raises(ValueError, match="sum"):
        FiltrationTree([-1, 0, 0, 1, 2], [1, 0.5, 0.6, 1, 1])
    with pytest.raises(ValueError, match="positive"):
        FiltrationTree([-1, 0, 0, 1, 2], [1, 1.0, 0.0, 1, 1])
    with pytest.raises(ValueError, match="leaf"):
        build_tree([-1, 0, 0, 1], [1, 0.5, 0.5, 1])
    with pytest.raises(ValueError):
        TimeGrid((0, 1), (0.0,))
    with pytest.raises(ValueError):
        TimeGrid((0, 2, 1), (1.0, 1.0))


def test_tower_property():
    for _, inst in instances(100):
        tree = inst.tree
        z = np.random.default_rng(1).normal(size=tree.n_nodes)
        leaves = tree.level_slice(tree.cemetery_level)
        direct = float(np.dot(tree.path_prob[leaves], z[leaves]))
        w = z.copy()
        for k in range(tree.n_levels - 2, -1, -1):
            w[tree.level_slice(k)] = conditional_expectation(tree, w, k)
        assert w[0] == pytest.approx(direct, abs=1e-12)


def test_supermartingale_examples(f1):
    tree = f1[0]
    assert is_supermartingale(tree, np.full(4, 3.0)) == (True, 0.0)
    assert is_supermartingale(tree, [3, 3, 2, 0])[0]
    ok, worst = is_supermartingale(tree, [1, 3, 2, 0])
    assert not ok and worst == 2.0


def test_martingale_iff_both_signs():
    for seed, inst in instances(30):
        tree = inst.tree
        rng = np.random.default_rng(seed)
        # build a martingale from its terminal value
        terminal = np.where(tree.is_cemetery, rng.normal(size=tree.n_nodes), 0.0)
        m = backward_value(terminal, StoppingTime.never(tree))
        assert is_supermartingale(tree, m)[0] and is_supermartingale(tree, -m)[0]
        internal = tree.n_children > 0
        assert np.allclose(tree.cond_next(m)[internal], m[internal], atol=1e-12)
        bumped = m.copy()
        bumped[0] += 0.5
        assert is_supermartingale(tree, bumped)[0]
        assert not is_supermartingale(tree, -bumped)[0]


def test_min_of_supermartingales():
    for seed, inst in instances(40):
        rng = np.random.default_rng(seed)
        tree, grid = inst.tree, inst.grid
        s1 = direct_recursion(tree, grid, np.where(tree.is_cemetery, 0, rng.normal(size=tree.n_nodes)))
        s2 = direct_recursion(tree, grid, np.where(tree.is_cemetery, 0, rng.normal(size=tree.n_nodes)))
        assert is_supermartingale(tree, np.minimum(s1, s2))[0]


def test_value_at_stopping_time_examples(f1, binary):
    tree = f1[0]
    y = np.array([3.0, 3.0, 2.0, 0.0])
    root = value_at_stopping_time(y, StoppingTime.at_level(tree, 0))
    assert root.as_dict() == {"": 3.0}
    assert value_at_stopping_time(y, StoppingTime.at_level(tree, 1)).as_dict() == {"0": 3.0}
    btree, _, x = binary
    rv = value_at_stopping_time(x, StoppingTime.at_level(btree, 1))
    assert rv.as_dict() == {"0": 2.0, "1": 0.0}
    assert list(rv.probs) == [0.5, 0.5]


def test_pathwise_and_backward_agree():
    for seed, inst in instances(50):
        tree = inst.tree
        rng = np.random.default_rng(seed)
        y = rng.normal(size=tree.n_nodes)
        tau = StoppingTime(tree, rng.random(tree.n_nodes) < 0.3)
        assert value_at_stopping_time(y, tau).expectation() == pytest.approx(
            backward_value(y, tau)[0], abs=1e-12)


def test_conditional_value_at(f1):
    tree = f1[0]
    u = np.array([3.0, 3.0, 2.0, 0.0])
    root = StoppingTime.at_level(tree, 0)
    at1 = value_at_stopping_time(u, StoppingTime.at_level(tree, 1))
    assert conditional_value_at(at1, root).values[0] == 3.0
    assert conditional_value_at(np.full(4, 7.0), StoppingTime.at_level(tree, 2)).values[0] == 7.0
    with pytest.raises(ValueError, match="later"):
        conditional_value_at(value_at_stopping_time(u, root), StoppingTime.at_level(tree, 2))


def test_norms(f1):
    tree, grid, _ = f1
    assert s2_norm(tree, grid, np.full(4, -2.5)) == 2.5
    assert not quadratic_variation(tree, np.full(4, 1.0)).any()
    assert quadratic_variation(tree, [3, 3, 2, 0])[-1] == 5.0
    btree = build_tree([-1, 0, 0], [1, 0.5, 0.5])
    rv = value_at_stopping_time([0, 2, 0, 0, 0], StoppingTime.at_level(btree, 1))
    assert lp_norm(rv, 2) == pytest.approx(np.sqrt(2), abs=1e-15)
    with pytest.raises(ValueError):
        lp_norm(rv, 0.5)
    # F1 decomposition M = 3, A = (0, 0, 1, 3): [M] = 0, total variation of A = 3
    assert h2_norm_canonical(tree, np.full(4, 3.0), [0, 0, 1, 3]) == 3.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 10_000))
def test_min_supermartingale_hypothesis(seed_a, seed_b):
    inst = next(instances(1, start=seed_a % 500))[1]
    tree, grid = inst.tree, inst.grid
    rng = np.random.default_rng(seed_b)
    a = direct_recursion(tree, grid, np.where(tree.is_cemetery, 0, rng.normal(size=tree.n_nodes)))
    b = direct_recursion(tree, grid, np.where(tree.is_cemetery, 0, rng.uniform(-1, 3, tree.n_nodes)))
    assert is_supermartingale(tree, np.minimum(a, b))[0]
