import json

import numpy as np
import pytest

from strongenv.engine import strong_envelope
from strongenv.instances import (
    ConfigError,
    config_from_dict,
    generate_random,
    instance_to_config,
    load_config,
)

from conftest import load


def test_f1_config_loads_to_chain():
    inst = load("f1.json")
    assert inst.tree.parents.tolist() == [-1, 0, 1, 2]
    assert inst.obstacle.tolist() == [1, 3, 2, 0]
    assert inst.grid.weights == (1.0, 1.0, 1.0)


def test_binomial_table_is_one_step_example(binary):
    inst = load("binary_one_step.json")
    tree, grid, x = binary
    assert inst.tree.parents.tolist() == tree.parents.tolist()
    assert inst.tree.probs.tolist() == tree.probs.tolist()
    assert inst.obstacle.tolist() == x.tolist()
    assert strong_envelope(inst.tree, inst.grid, inst.obstacle).U[0] == 1.0


def test_binomial_put_payoffs():
    cfg = config_from_dict({"lattice": {"kind": "binomial", "steps": 2, "p": 0.4, "initial": 10,
                                        "up": 2.0, "down": 0.5, "payoff": "put", "strike": 10}})
    inst = cfg.resolve()
    # level 2 in up-first order: uu=40, ud=10, du=10, dd=2.5
    assert inst.obstacle[3:7].tolist() == [0.0, 0.0, 0.0, 7.5]
    assert inst.tree.probs[1:3].tolist() == [0.4, 0.6]


def test_random_generation_deterministic():
    a = generate_random(seed=1, depth=3, branching=2, low=-1, high=1).resolve()
    b = generate_random(seed=1, depth=3, branching=2, low=-1, high=1).resolve()
    assert a.digest() == b.digest()
    live = ~a.tree.is_cemetery
    assert np.all((a.obstacle[live] >= -1) & (a.obstacle[live] <= 1))
    assert np.all(a.tree.probs > 0)
    assert generate_random(seed=2, depth=3, branching=2).resolve().digest() != a.digest()


def test_round_trip_digest(tmp_path):
    for seed in range(20):
        inst = generate_random(seed, depth=1 + seed % 6, branching=3).resolve()
        path = tmp_path / f"{seed}.json"
        path.write_text(json.dumps(instance_to_config(inst).to_dict()))
        assert load_config(path).resolve().digest() == inst.digest()


def test_explicit_nodes_any_order():
    # children listed before their sibling subtree is finished still resolves level by level
    cfg = config_from_dict({"tree": {"nodes": [
        {"parent": None, "obstacle": 0},
        {"parent": 0, "prob": 0.5, "obstacle": 1},
        {"parent": 1, "prob": 1.0, "obstacle": 2},
        {"parent": 0, "prob": 0.5, "obstacle": 3},
        {"parent": 3, "prob": 1.0, "obstacle": 4},
    ]}})
    inst = cfg.resolve()
    assert inst.obstacle[:5].tolist() == [0, 1, 3, 2, 4]


@pytest.mark.parametrize("data, where", [
    ({}, "exactly one"),
    ({"tree": {"nodes": [{"parent": None, "obstacle": 0}, {"parent": 0, "prob": 0, "obstacle": 1}]}},
     "tree.nodes[1].prob"),
    ({"tree": {"nodes": [{"parent": None, "obstacle": "x"}]}}, "tree.nodes[0].obstacle"),
    ({"tree": {"nodes": [{"parent": None, "obstacle": 0}, {"parent": 5, "prob": 1, "obstacle": 1}]}},
     "tree.nodes[1].parent"),
    ({"lattice": {"steps": 1, "p": 1.5, "payoff": "table", "table": [[0], [1, 1]]}}, "lattice.p"),
    ({"lattice": {"steps": 25, "p": 0.5, "payoff": "table"}}, "lattice.steps"),
    ({"tree": {"nodes": [{"parent": None, "obstacle": 1}]}, "grid": {"times": [0, 1], "weights": [0]}},
     "grid"),
    ({"tree": {"nodes": [{"parent": None, "obstacle": 1}]}, "bogus": 1}, "unknown keys"),
])
def test_config_errors(data, where):
    with pytest.raises(ConfigError, match=where.replace("[", r"\[").replace("]", r"\]")):
        config_from_dict(data).resolve()


def test_json_error_has_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "tree": \n}')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(p)
