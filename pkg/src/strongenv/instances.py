"""Instance configuration: JSON loading, binomial lattices, seeded random
trees and stable digests."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .engine import BetaSchedule
from .tree import FiltrationTree, TimeGrid, build_tree

NODE_GUARD = 1 << 20
RNG_ALGORITHM = "numpy.random.PCG64"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Instance:
    tree: FiltrationTree
    grid: TimeGrid
    obstacle: np.ndarray
    schedule: BetaSchedule = field(default_factory=BetaSchedule)

    def digest(self) -> str:
        return instance_digest(self)


@dataclass
class InstanceConfig:
    """Raw, validated-on-resolve description of an instance.

    Exactly one of ``tree`` (explicit nodes) or ``lattice`` (binomial) is set.
    """

    tree: dict | None = None
    lattice: dict | None = None
    grid: dict | None = None
    schedule: dict | None = None

    def resolve(self) -> Instance:
        if (self.tree is None) == (self.lattice is None):
            raise ConfigError("config needs exactly one of 'tree' or 'lattice'")
        if self.tree is not None:
            parents, probs, obstacle = _explicit_nodes(self.tree)
        else:
            parents, probs, obstacle = _binomial_nodes(self.lattice)
        tree = build_tree(parents, probs)
        n_times = tree.n_levels - 1
        grid = _grid(self.grid, n_times)
        x = np.zeros(tree.n_nodes)
        x[: len(obstacle)] = obstacle
        schedule = _schedule(self.schedule)
        return Instance(tree, grid, x, schedule)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        if self.tree is not None:
            out["tree"] = self.tree
        if self.lattice is not None:
            out["lattice"] = self.lattice
        if self.grid is not None:
            out["grid"] = self.grid
        if self.schedule is not None:
            out["schedule"] = self.schedule
        return out


def _field(where: str, msg: str) -> ConfigError:
    return ConfigError(f"{where}: {msg}")


def _number(obj: dict, key: str, where: str, default=None) -> float:
    if key not in obj:
        if default is None:
            raise _field(f"{where}.{key}", "missing")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise _field(f"{where}.{key}", f"expected a number, got {val!r}")
    return float(val)


def _explicit_nodes(spec: dict):
    nodes = spec.get("nodes") if isinstance(spec, dict) else None
    if not isinstance(nodes, list) or not nodes:
        raise _field("tree.nodes", "expected a non-empty list")
    parents, probs, obstacle = [], [], []
    for i, node in enumerate(nodes):
        where = f"tree.nodes[{i}]"
        if not isinstance(node, dict):
            raise _field(where, "expected an object")
        parent = node.get("parent")
        if i == 0:
            if parent is not None:
                raise _field(f"{where}.parent", "the first node is the root and must have parent null")
            parent = -1
        elif not isinstance(parent, int) or isinstance(parent, bool) or not 0 <= parent < i:
            raise _field(f"{where}.parent", f"expected an earlier node index, got {parent!r}")
        prob = 1.0 if i == 0 else _number(node, "prob", where)
        if i > 0 and not prob > 0:
            raise _field(f"{where}.prob", "must be > 0")
        parents.append(parent)
        probs.append(prob)
        obstacle.append(_number(node, "obstacle", where))
    if len(nodes) > NODE_GUARD:
        raise _field("tree.nodes", f"more than {NODE_GUARD} nodes")

    # reorder level by level (stable), keeping the cemetery append order canonical
    level = [0] * len(parents)
    for i in range(1, len(parents)):
        level[i] = level[parents[i]] + 1
    order = sorted(range(len(parents)), key=lambda i: level[i])
    new_index = {old: new for new, old in enumerate(order)}
    parents = [-1 if parents[i] < 0 else new_index[parents[i]] for i in order]
    probs = [probs[i] for i in order]
    obstacle = [obstacle[i] for i in order]
    try:
        build_tree(parents, probs)
    except ValueError as exc:
        raise _field("tree.nodes", str(exc)) from None
    return parents, probs, obstacle


def _binomial_nodes(spec: dict):
    where = "lattice"
    if not isinstance(spec, dict):
        raise _field(where, "expected an object")
    if spec.get("kind", "binomial") != "binomial":
        raise _field(f"{where}.kind", f"unsupported lattice kind {spec.get('kind')!r}")
    steps = spec.get("steps")
    if not isinstance(steps, int) or isinstance(steps, bool) or steps < 0:
        raise _field(f"{where}.steps", "expected a non-negative integer")
    if 2 ** (steps + 1) - 1 > NODE_GUARD:
        raise _field(f"{where}.steps", f"expanded tree exceeds {NODE_GUARD} nodes")
    p = _number(spec, "p", where)
    if not 0 < p < 1:
        raise _field(f"{where}.p", "must lie in (0, 1)")
    payoff = spec.get("payoff")
    if payoff == "table":
        table = spec.get("table")
        if not isinstance(table, list) or len(table) != steps + 1:
            raise _field(f"{where}.table", f"expected {steps + 1} rows")
        for k, row in enumerate(table):
            if not isinstance(row, list) or len(row) != k + 1:
                raise _field(f"{where}.table[{k}]", f"expected {k + 1} values")

        def value(k, downs):
            return float(table[k][downs])
    elif payoff in ("call", "put"):
        s0 = _number(spec, "initial", where)
        up = _number(spec, "up", where)
        down = _number(spec, "down", where)
        strike = _number(spec, "strike", where)
        sign = 1.0 if payoff == "call" else -1.0

        def value(k, downs):
            price = s0 * up ** (k - downs) * down ** downs
            return max(sign * (price - strike), 0.0)
    else:
        raise _field(f"{where}.payoff", "expected 'call', 'put' or 'table'")

    # full (non-recombining) binary tree, up move first
    parents, probs, obstacle = [-1], [1.0], [value(0, 0)]
    downs = [0]
    start = 0
    for k in range(1, steps + 1):
        end = len(parents)
        for node in range(start, end):
            for child, (q, dd) in enumerate(((p, 0), (1 - p, 1))):
                parents.append(node)
                probs.append(q)
                downs.append(downs[node] + dd)
                obstacle.append(value(k, downs[-1]))
        start = end
    return parents, probs, obstacle


def _grid(spec, n_times: int) -> TimeGrid:
    if spec is None:
        return TimeGrid.uniform(n_times)
    if not isinstance(spec, dict):
        raise _field("grid", "expected an object")
    times = spec.get("times", list(range(n_times + 1)))
    weights = spec.get("weights", [1.0] * n_times)
    if len(times) != n_times + 1:
        raise _field("grid.times", f"expected {n_times + 1} entries (the last is the cemetery)")
    if len(weights) != n_times:
        raise _field("grid.weights", f"expected {n_times} entries")
    try:
        return TimeGrid(tuple(times), tuple(weights))
    except (TypeError, ValueError) as exc:
        raise _field("grid", str(exc)) from None


def _schedule(spec) -> BetaSchedule:
    spec = spec or {}
    if not isinstance(spec, dict):
        raise _field("schedule", "expected an object")
    known = {"beta_0", "growth", "beta_max", "tol_gap", "tol_dom"}
    extra = set(spec) - known
    if extra:
        raise _field("schedule", f"unknown keys {sorted(extra)}")
    try:
        return BetaSchedule.from_env(**{k: float(v) for k, v in spec.items()})
    except (TypeError, ValueError) as exc:
        raise _field("schedule", str(exc)) from None


def config_from_dict(data: Any) -> InstanceConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a JSON object")
    extra = set(data) - {"tree", "lattice", "grid", "schedule"}
    if extra:
        raise ConfigError(f"top level: unknown keys {sorted(extra)}")
    return InstanceConfig(data.get("tree"), data.get("lattice"), data.get("grid"), data.get("schedule"))


def load_config(path) -> InstanceConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    cfg = config_from_dict(data)
    cfg.resolve()
    return cfg


def generate_random(seed: int, depth: int = 4, branching: int = 3, low: float = -1.0,
                    high: float = 2.0, zero_weight_prob: float = 0.25,
                    max_nodes: int | None = None) -> InstanceConfig:
    """Seeded random instance with ``depth`` real times.

    Every node gets 1..``branching`` children with probabilities bounded away
    from zero; weights are 0 with probability ``zero_weight_prob``, otherwise
    uniform on [0.5, 1.5]; time steps are uniform on [0.5, 1.5]; obstacle
    values are uniform on [low, high]. With ``max_nodes`` the draw is repeated
    until the tree has at most that many non-cemetery nodes.
    """
    if depth < 1 or branching < 1:
        raise ValueError("depth and branching must be positive")
    if branching ** depth > NODE_GUARD:
        raise ConfigError(f"depth {depth} with branching {branching} may exceed {NODE_GUARD} nodes")
    rng = np.random.default_rng(seed)
    while True:
        parents, probs = [-1], [1.0]
        start = 0
        for _ in range(1, depth):
            end = len(parents)
            for node in range(start, end):
                k = int(rng.integers(1, branching + 1))
                raw = rng.uniform(0.2, 1.0, size=k)
                q = raw / raw.sum()
                q[-1] = 1.0 - q[:-1].sum()
                parents.extend([node] * k)
                probs.extend(float(v) for v in q)
            start = end
        if max_nodes is None or len(parents) <= max_nodes:
            break
    obstacle = rng.uniform(low, high, size=len(parents))
    weights = np.where(rng.random(depth) < zero_weight_prob, 0.0, rng.uniform(0.5, 1.5, size=depth))
    if not np.any(weights > 0):
        weights[int(rng.integers(depth))] = 1.0
    times = np.concatenate([[0.0], np.cumsum(rng.uniform(0.5, 1.5, size=depth))])
    nodes = [
        {"parent": None if i == 0 else parents[i], "prob": probs[i], "obstacle": float(obstacle[i])}
        for i in range(len(parents))
    ]
    return InstanceConfig(
        tree={"nodes": nodes},
        grid={"times": [float(t) for t in times], "weights": [float(w) for w in weights]},
    )


def instance_to_config(inst: Instance) -> InstanceConfig:
    """Explicit-tree config that reloads to the same instance."""
    tree = inst.tree
    live = np.flatnonzero(~tree.is_cemetery)
    nodes = [
        {"parent": None if i == 0 else int(tree.parents[i]), "prob": float(tree.probs[i]),
         "obstacle": float(inst.obstacle[i])}
        for i in live
    ]
    return InstanceConfig(
        tree={"nodes": nodes},
        grid={"times": list(inst.grid.times), "weights": list(inst.grid.weights)},
    )


def instance_digest(inst: Instance) -> str:
    """SHA-256 over the exact (hex-float) tree, grid and obstacle."""
    payload = {
        "parents": [int(p) for p in inst.tree.parents],
        "probs": [float(v).hex() for v in inst.tree.probs],
        "times": [float(v).hex() for v in inst.grid.times],
        "weights": [float(v).hex() for v in inst.grid.weights],
        "obstacle": [float(v).hex() for v in inst.obstacle],
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
