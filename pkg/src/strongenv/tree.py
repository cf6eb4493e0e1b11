"""Finite filtration trees, time grids, stopping times and the probabilistic
primitives built on them.

Nodes are stored in breadth-first order, so every time level occupies a
contiguous slice of node indices and a parent always precedes its children.
Processes are plain float arrays with one entry per node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

PROB_TOL = 1e-12


class FiltrationTree:
    """Rooted tree of F_t-atoms with positive transition probabilities.

    Parameters
    ----------
    parents : sequence of int
        ``parents[i]`` is the parent of node ``i``; the root (node 0) has -1.
        Nodes must be listed level by level.
    probs : sequence of float
        Transition probability into each node from its parent. The root's
        entry is ignored and stored as 1.

    The deepest level is the cemetery level; every leaf must sit there.
    """

    def __init__(self, parents: Sequence[int], probs: Sequence[float]):
        parents = np.asarray(parents, dtype=np.int64)
        probs = np.asarray(probs, dtype=float).copy()
        n = parents.size
        if n < 2:
            raise ValueError("a tree needs at least a root and a cemetery node")
        if parents[0] != -1:
            raise ValueError("node 0 must be the root (parent -1)")
        if probs.size != n:
            raise ValueError("parents and probs must have equal length")
        idx = np.arange(1, n)
        if np.any(parents[1:] < 0) or np.any(parents[1:] >= idx):
            raise ValueError("every non-root node needs a parent with a smaller index")
        probs[0] = 1.0

        level = np.zeros(n, dtype=np.int64)
        for i in range(1, n):
            level[i] = level[parents[i]] + 1
        if np.any(np.diff(level) < 0):
            raise ValueError("nodes must be ordered level by level")
        if np.any(probs[1:] <= 0):
            raise ValueError("transition probabilities must be strictly positive")

        n_children = np.bincount(parents[1:], minlength=n)
        sums = np.bincount(parents[1:], weights=probs[1:], minlength=n)
        internal = n_children > 0
        bad = internal & (np.abs(sums - 1.0) > PROB_TOL)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ValueError(f"child probabilities of node {i} sum to {sums[i]!r}, not 1")
        depth = int(level[-1])
        if np.any(~internal & (level != depth)):
            raise ValueError("every leaf must sit at the cemetery level")

        self.parents = parents
        self.probs = probs
        self.level = level
        self.n_children = n_children
        self.n_levels = depth + 1
        starts = np.searchsorted(level, np.arange(self.n_levels + 1))
        self._slices = [slice(int(starts[k]), int(starts[k + 1])) for k in range(self.n_levels)]

        path_prob = np.ones(n)
        child_index = np.zeros(n, dtype=np.int64)
        seen = np.zeros(n, dtype=np.int64)
        for i in range(1, n):
            p = parents[i]
            path_prob[i] = path_prob[p] * probs[i]
            child_index[i] = seen[p]
            seen[p] += 1
        self.path_prob = path_prob
        self.child_index = child_index

        # ancestors[i, k] is the ancestor of i at level k (-1 below i's level)
        anc = np.full((n, self.n_levels), -1, dtype=np.int64)
        anc[np.arange(n), level] = np.arange(n)
        for k in range(self.n_levels - 1, 0, -1):
            rows = anc[:, k] >= 0
            anc[rows, k - 1] = parents[anc[rows, k]]
        self.ancestors = anc

        for arr in (self.parents, self.probs, self.level, self.n_children,
                    self.path_prob, self.child_index, self.ancestors):
            arr.flags.writeable = False

    @property
    def n_nodes(self) -> int:
        return self.parents.size

    @property
    def cemetery_level(self) -> int:
        return self.n_levels - 1

    @property
    def is_cemetery(self) -> np.ndarray:
        return self.level == self.cemetery_level

    def level_slice(self, k: int) -> slice:
        if not 0 <= k < self.n_levels:
            raise IndexError(f"level {k} out of range 0..{self.n_levels - 1}")
        return self._slices[k]

    def path(self, node: int) -> str:
        """Child-index path from the root, e.g. ``"0.1.0"``; the root is ``""``."""
        steps = []
        while node > 0:
            steps.append(str(int(self.child_index[node])))
            node = int(self.parents[node])
        return ".".join(reversed(steps))

    def cond_level(self, values: np.ndarray, k: int) -> np.ndarray:
        """E[values at level k+1 | node] for every node at level k."""
        here = self.level_slice(k)
        nxt = self.level_slice(k + 1)
        return np.bincount(
            self.parents[nxt] - here.start,
            weights=self.probs[nxt] * values[nxt],
            minlength=here.stop - here.start,
        )

    def cond_next(self, values: np.ndarray) -> np.ndarray:
        """One-step conditional expectation at every node (0 at the leaves)."""
        return np.bincount(
            self.parents[1:], weights=self.probs[1:] * values[1:], minlength=self.n_nodes
        )

    def check_process(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_nodes,):
            raise ValueError(f"process must have {self.n_nodes} node values, got shape {values.shape}")
        return values

    @classmethod
    def chain(cls, n_times: int) -> "FiltrationTree":
        """Deterministic path with ``n_times`` real times plus the cemetery."""
        return build_tree([-1] + list(range(n_times - 1)), [1.0] * n_times)


def build_tree(parents: Sequence[int], probs: Sequence[float]) -> FiltrationTree:
    """Tree from the non-cemetery nodes; one cemetery child is appended to
    every deepest node."""
    parents = list(parents)
    probs = list(probs)
    n = len(parents)
    level = [0] * n
    for i in range(1, n):
        level[i] = level[parents[i]] + 1
    deepest = max(level)
    has_child = set(parents[1:])
    for i in range(n):
        if i not in has_child and level[i] != deepest:
            raise ValueError(f"node {i} is a leaf at level {level[i]}, expected level {deepest}")
    for i in range(n):
        if level[i] == deepest:
            parents.append(i)
            probs.append(1.0)
    return FiltrationTree(parents, probs)


@dataclass(frozen=True)
class TimeGrid:
    """Time points t_0 < ... < t_T < t_cemetery with Lebesgue weights w_0..w_T.

    A time is obstacle-active iff its weight is positive.
    """

    times: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        weights = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "weights", weights)
        if len(times) < 2:
            raise ValueError("need at least one time plus the cemetery time")
        if len(weights) != len(times) - 1:
            raise ValueError("need one weight per non-cemetery time")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("times must be strictly increasing")
        if any(w < 0 for w in weights) or not any(w > 0 for w in weights):
            raise ValueError("weights must be non-negative with at least one positive")

    @classmethod
    def uniform(cls, n_times: int, weights: Sequence[float] | None = None) -> "TimeGrid":
        return cls(tuple(range(n_times + 1)), tuple(weights) if weights is not None else (1.0,) * n_times)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(np.asarray(self.times))

    def check(self, tree: FiltrationTree) -> None:
        if len(self.times) != tree.n_levels:
            raise ValueError(
                f"grid has {len(self.times)} times but the tree has {tree.n_levels} levels"
            )

    def weighted_nodes(self, tree: FiltrationTree) -> np.ndarray:
        """Mask of non-cemetery nodes at positive-weight times."""
        self.check(tree)
        w = np.append(np.asarray(self.weights), 0.0)
        return w[tree.level] > 0

    def stop_eligible(self, tree: FiltrationTree) -> np.ndarray:
        """Nodes where estimates may sample the obstacle: weighted or cemetery."""
        return self.weighted_nodes(tree) | tree.is_cemetery


class StoppingTime:
    """First-hit rule: tau(path) is the first flagged node on the path.

    Cemetery nodes are always flagged, so every path stops.
    """

    def __init__(self, tree: FiltrationTree, flags):
        flags = np.array(flags, dtype=bool)
        if flags.shape != (tree.n_nodes,):
            raise ValueError("need one stop flag per node")
        flags |= tree.is_cemetery
        before = np.zeros(tree.n_nodes, dtype=bool)
        stop_node = np.full(tree.n_nodes, -1, dtype=np.int64)
        for k in range(tree.n_levels):
            sl = tree.level_slice(k)
            if k > 0:
                par = tree.parents[sl]
                before[sl] = before[par] | flags[par]
                stop_node[sl] = stop_node[par]
            hit = flags[sl] & ~before[sl]
            stop_node[sl] = np.where(hit, np.arange(sl.start, sl.stop), stop_node[sl])
        self.tree = tree
        self.flags = flags
        # stopped_before[n]: tau < level(n) on paths through n
        self.stopped_before = before
        self.hit = flags & ~before
        # stop_node[n]: the node where tau stopped, when tau <= level(n)
        self.stop_node = stop_node
        for arr in (self.flags, self.stopped_before, self.hit, self.stop_node):
            arr.flags.writeable = False

    @property
    def active(self) -> np.ndarray:
        """tau >= level(n) on paths through n."""
        return ~self.stopped_before

    @property
    def reached(self) -> np.ndarray:
        """tau <= level(n) on paths through n."""
        return self.stop_node >= 0

    @classmethod
    def at_level(cls, tree: FiltrationTree, k: int) -> "StoppingTime":
        return cls(tree, tree.level == k)

    @classmethod
    def never(cls, tree: FiltrationTree) -> "StoppingTime":
        """Stops at the cemetery."""
        return cls(tree, np.zeros(tree.n_nodes, dtype=bool))

    def precedes(self, other: "StoppingTime") -> bool:
        """True iff self <= other on every path."""
        return bool(np.all(other.active[self.hit]))

    def levels(self) -> np.ndarray:
        return self.tree.level[self.hit]

    def describe(self) -> str:
        nodes = np.flatnonzero(self.hit)
        return "stop at {" + ", ".join(repr(self.tree.path(int(n))) for n in nodes) + "}"


def earliest(a: StoppingTime, b: StoppingTime) -> StoppingTime:
    return StoppingTime(a.tree, a.flags | b.flags)


def latest(a: StoppingTime, b: StoppingTime) -> StoppingTime:
    return StoppingTime(a.tree, a.reached & b.reached)


@dataclass(frozen=True)
class RandomVariableAtStop:
    """A quantity sampled on the atoms of F_tau: one value per stop node."""

    tau: StoppingTime
    nodes: np.ndarray
    values: np.ndarray
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if abs(self.probs.sum() - 1.0) > PROB_TOL:
            raise ValueError("atom probabilities must sum to 1")

    def expectation(self) -> float:
        return float(np.dot(self.probs, self.values))

    def on_nodes(self) -> np.ndarray:
        """Full-length array holding the values at the stop nodes (0 elsewhere)."""
        out = np.zeros(self.tau.tree.n_nodes)
        out[self.nodes] = self.values
        return out

    def as_dict(self) -> dict[str, float]:
        tree = self.tau.tree
        return {tree.path(int(n)): float(v) for n, v in zip(self.nodes, self.values)}


def _atoms(tau: StoppingTime, per_node: np.ndarray) -> RandomVariableAtStop:
    nodes = np.flatnonzero(tau.hit)
    return RandomVariableAtStop(tau, nodes, per_node[nodes], tau.tree.path_prob[nodes])


def conditional_expectation(tree: FiltrationTree, values, level: int) -> np.ndarray:
    """E[Z_{k+1} | F_k] as values on the level-k nodes.

    ``values`` is either a full per-node process or just the level-(k+1) values.
    """
    if not 0 <= level < tree.n_levels - 1:
        raise IndexError(f"level {level} has no successor level")
    values = np.asarray(values, dtype=float)
    nxt = tree.level_slice(level + 1)
    if values.shape == (nxt.stop - nxt.start,):
        full = np.zeros(tree.n_nodes)
        full[nxt] = values
        values = full
    return tree.cond_level(tree.check_process(values), level)


def is_supermartingale(tree: FiltrationTree, values, tol: float = 1e-10) -> tuple[bool, float]:
    """Return ``(ok, worst)`` with worst = max over internal nodes of E[Y_{k+1}|n] - Y(n)."""
    y = tree.check_process(values)
    internal = tree.n_children > 0
    worst = float(np.max(tree.cond_next(y)[internal] - y[internal]))
    return worst <= tol, worst


def value_at_stopping_time(values, tau: StoppingTime) -> RandomVariableAtStop:
    return _atoms(tau, tau.tree.check_process(values))


def backward_value(values, tau: StoppingTime) -> np.ndarray:
    """Backward sweep of Y stopped at tau: Y at stop nodes, continuation value
    above them. The root entry is E[Y_tau]."""
    tree = tau.tree
    y = tree.check_process(values)
    w = np.where(tau.hit, y, 0.0)
    for k in range(tree.n_levels - 2, -1, -1):
        sl = tree.level_slice(k)
        w[sl] = np.where(tau.hit[sl], y[sl], tree.cond_level(w, k))
    return w


def conditional_value_at(z, tau1: StoppingTime) -> RandomVariableAtStop:
    """E[Z | F_tau1] on the atoms of tau1.

    ``z`` is a :class:`RandomVariableAtStop` (sampled at some tau >= tau1) or a
    per-node process, read as its terminal value at the cemetery.
    """
    tree = tau1.tree
    if isinstance(z, RandomVariableAtStop):
        tau = z.tau
        per_node = z.on_nodes()
    else:
        tau = StoppingTime.never(tree)
        per_node = tree.check_process(z)
    if not tau1.precedes(tau):
        raise ValueError("conditioning time is later than the sampling time on some path")
    return _atoms(tau1, backward_value(per_node, tau))


def lp_norm(z: RandomVariableAtStop, p: float) -> float:
    if p < 1:
        raise ValueError("p must be >= 1")
    return float(np.dot(z.probs, np.abs(z.values) ** p) ** (1.0 / p))


def pathwise_max(tree: FiltrationTree, values, mask=None) -> np.ndarray:
    """Running max of ``values`` over masked ancestors-or-self (-inf if none)."""
    v = np.where(np.ones(tree.n_nodes, dtype=bool) if mask is None else mask,
                 tree.check_process(values), -np.inf)
    out = v.copy()
    for k in range(1, tree.n_levels):
        sl = tree.level_slice(k)
        out[sl] = np.maximum(out[tree.parents[sl]], v[sl])
    return out


def s2_norm(tree: FiltrationTree, grid: TimeGrid, values) -> float:
    """(E[sup_t Y_t^2])^(1/2), sup over weighted times and the cemetery."""
    y = tree.check_process(values)
    run = pathwise_max(tree, y * y, grid.stop_eligible(tree))
    leaves = tree.level_slice(tree.cemetery_level)
    return float(np.sqrt(np.dot(tree.path_prob[leaves], run[leaves])))


def quadratic_variation(tree: FiltrationTree, values) -> np.ndarray:
    """[Y] at each node: running sum of squared increments along the path."""
    y = tree.check_process(values)
    qv = np.zeros(tree.n_nodes)
    for k in range(1, tree.n_levels):
        sl = tree.level_slice(k)
        par = tree.parents[sl]
        qv[sl] = qv[par] + (y[sl] - y[par]) ** 2
    return qv


def total_variation(tree: FiltrationTree, values) -> np.ndarray:
    y = tree.check_process(values)
    tv = np.zeros(tree.n_nodes)
    for k in range(1, tree.n_levels):
        sl = tree.level_slice(k)
        par = tree.parents[sl]
        tv[sl] = tv[par] + np.abs(y[sl] - y[par])
    return tv


def h2_norm_canonical(tree: FiltrationTree, m, a) -> float:
    """|| [M]_inf^(1/2) + int |dA| ||_L2 for a given decomposition Y = M - A.

    With the Doob-Meyer pair this bounds the H^2 norm (an infimum over all
    decompositions) from above.
    """
    leaves = tree.level_slice(tree.cemetery_level)
    per_path = np.sqrt(quadratic_variation(tree, m)) + total_variation(tree, a)
    return float(np.sqrt(np.dot(tree.path_prob[leaves], per_path[leaves] ** 2)))


def stochastic_integral(tree: FiltrationTree, integrand, integrator,
                        tau1: StoppingTime, tau2: StoppingTime) -> RandomVariableAtStop:
    """sum_{s=tau1+1}^{tau2} H_{s-1} (Y_s - Y_{s-1}), sampled at tau2."""
    if not tau1.precedes(tau2):
        raise ValueError("tau1 must not exceed tau2")
    h = tree.check_process(integrand)
    y = tree.check_process(integrator)
    acc = np.zeros(tree.n_nodes)
    for k in range(1, tree.n_levels):
        sl = tree.level_slice(k)
        par = tree.parents[sl]
        live = tau1.reached[par] & tau2.active[sl]
        acc[sl] = acc[par] + np.where(live, h[par] * (y[sl] - y[par]), 0.0)
    return _atoms(tau2, acc)
