"""Brute-force ground truth for small trees: exhaustive enumeration of
stopping times and value iteration from above."""

from __future__ import annotations

import itertools
from typing import Iterator

import numpy as np

from .tree import FiltrationTree, StoppingTime, TimeGrid

DEFAULT_CAP = 1 << 16


class EnumerationCapExceeded(ValueError):
    pass


def _children(tree: FiltrationTree) -> list[list[int]]:
    kids: list[list[int]] = [[] for _ in range(tree.n_nodes)]
    for i in range(1, tree.n_nodes):
        kids[int(tree.parents[i])].append(i)
    return kids


def _allowed(tree: FiltrationTree, allowed) -> np.ndarray:
    if allowed is None:
        return np.ones(tree.n_nodes, dtype=bool)
    return np.asarray(allowed, dtype=bool) | tree.is_cemetery


def count_stopping_times(tree: FiltrationTree, allowed=None) -> int:
    """Number of distinct stopping times up to labels below a stop node.

    count(n) = [stop allowed at n] + prod over children of count(child);
    a cemetery node counts 1.
    """
    ok = _allowed(tree, allowed)
    kids = _children(tree)
    count = [0] * tree.n_nodes
    for n in range(tree.n_nodes - 1, -1, -1):
        if tree.is_cemetery[n]:
            count[n] = 1
        else:
            prod = 1
            for c in kids[n]:
                prod *= count[c]
            count[n] = int(ok[n]) + prod
    return count[0]


def _stop_sets(tree: FiltrationTree, ok: np.ndarray) -> Iterator[tuple[int, ...]]:
    kids = _children(tree)

    def rec(n: int) -> Iterator[tuple[int, ...]]:
        if tree.is_cemetery[n]:
            yield (n,)
            return
        if ok[n]:
            yield (n,)
        for combo in itertools.product(*[list(rec(c)) for c in kids[n]]):
            yield tuple(itertools.chain.from_iterable(combo))

    return rec(0)


def enumerate_stopping_times(tree: FiltrationTree, cap: int = DEFAULT_CAP,
                             allowed=None) -> Iterator[StoppingTime]:
    """All stopping times of ``tree``, one per reachable decision prefix.

    ``allowed`` restricts the non-cemetery nodes where stopping is permitted.
    """
    ok = _allowed(tree, allowed)
    total = count_stopping_times(tree, ok)
    if total > cap:
        raise EnumerationCapExceeded(f"{total} stopping times exceed the cap of {cap}")
    for stops in _stop_sets(tree, ok):
        flags = np.zeros(tree.n_nodes, dtype=bool)
        flags[list(stops)] = True
        yield StoppingTime(tree, flags)


def root_value_by_enumeration(tree: FiltrationTree, grid: TimeGrid, x,
                              cap: int = DEFAULT_CAP) -> float:
    """max over stopping times (weighted times or cemetery) of E[X_tau]."""
    x = tree.check_process(x)
    ok = grid.stop_eligible(tree)
    total = count_stopping_times(tree, ok)
    if total > cap:
        raise EnumerationCapExceeded(f"{total} stopping times exceed the cap of {cap}")
    payoff = np.where(tree.is_cemetery, 0.0, x) * tree.path_prob
    return max(float(sum(payoff[n] for n in stops)) for stops in _stop_sets(tree, ok))


def value_iteration_operator(tree: FiltrationTree, grid: TimeGrid, x, y) -> np.ndarray:
    """One simultaneous sweep: max(X at weighted nodes, E[Y_next | node]), 0 at the cemetery."""
    w = grid.weighted_nodes(tree)
    out = np.where(w, np.maximum(x, tree.cond_next(y)), tree.cond_next(y))
    out[tree.is_cemetery] = 0.0
    return out


def envelope_by_value_iteration(tree: FiltrationTree, grid: TimeGrid, x,
                                start_level: float, tol: float = 1e-12) -> np.ndarray:
    x = tree.check_process(x)
    w = grid.weighted_nodes(tree)
    if start_level < 0 or start_level < x[w].max(initial=0.0):
        raise ValueError("start level must dominate the weighted obstacle and 0")
    y = np.full(tree.n_nodes, float(start_level))
    cap = 10 * tree.n_levels
    for _ in range(cap):
        nxt = value_iteration_operator(tree, grid, x, y)
        change = float(np.max(np.abs(nxt - y)))
        y = nxt
        if change < tol:
            return y
    raise RuntimeError(f"value iteration did not settle within {cap} sweeps")
