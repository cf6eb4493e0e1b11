"""Strong envelope construction: penalization, the direct recursion,
Doob-Meyer decomposition and epsilon-optimal stopping."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .tree import FiltrationTree, StoppingTime, TimeGrid, is_supermartingale


class NonConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class BetaSchedule:
    beta_0: float = 1.0
    growth: float = 10.0
    beta_max: float = 1e8
    tol_gap: float = 1e-9
    tol_dom: float = 1e-6

    def __post_init__(self):
        if not self.beta_0 > 0:
            raise ValueError("beta_0 must be positive")
        if not self.growth > 1:
            raise ValueError("growth factor must exceed 1")
        if self.beta_max < self.beta_0:
            raise ValueError("beta_max must be >= beta_0")
        if not (self.tol_gap > 0 and self.tol_dom > 0):
            raise ValueError("tolerances must be positive")

    @classmethod
    def from_env(cls, **overrides) -> "BetaSchedule":
        """Defaults, then STRONGENV_TOL_GAP / STRONGENV_TOL_DOM, then ``overrides``."""
        kw = {}
        for key, var in (("tol_gap", "STRONGENV_TOL_GAP"), ("tol_dom", "STRONGENV_TOL_DOM")):
            if os.environ.get(var):
                kw[key] = float(os.environ[var])
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    def betas(self) -> list[float]:
        out = []
        j = 0
        while True:
            b = self.beta_0 * self.growth ** j
            if b > self.beta_max * (1 + 1e-12):
                return out
            out.append(float(b))
            j += 1


@dataclass
class SweepRow:
    beta: float
    sup_gap: float  # sup over nodes of |U - U^beta|
    step_gap: float  # sup over nodes of |U^beta - U^previous beta|
    domination_violation: float


@dataclass
class EnvelopeResult:
    U: np.ndarray
    M: np.ndarray
    A: np.ndarray
    sweep: list[SweepRow] = field(default_factory=list)
    converged: bool = False
    domination_violation: float = 0.0


def penalized_step(x, m, c):
    """Solve y = c (x - y)^+ + m for y.

    Vectorizes over numpy inputs.

    >>> penalized_step(2.0, 0.0, 1.0)
    1.0
    """
    c_arr = np.asarray(c, dtype=float)
    if np.any(c_arr < 0):
        raise ValueError("penalty coefficient must be non-negative")
    x = np.asarray(x, dtype=float)
    m = np.asarray(m, dtype=float)
    y = np.where(m >= x, m, (c_arr * x + m) / (1.0 + c_arr))
    return float(y) if y.ndim == 0 else y


def _obstacle(tree: FiltrationTree, grid: TimeGrid, x) -> np.ndarray:
    grid.check(tree)
    x = tree.check_process(x)
    if np.any(x[tree.is_cemetery] != 0):
        raise ValueError("obstacle must vanish at the cemetery")
    return x


def penalized_envelope(tree: FiltrationTree, grid: TimeGrid, x, beta: float) -> np.ndarray:
    """U^beta by one backward pass with left-endpoint quadrature."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    x = _obstacle(tree, grid, x)
    u = np.zeros(tree.n_nodes)
    w, dt = grid.weights, grid.steps
    for k in range(tree.n_levels - 2, -1, -1):
        sl = tree.level_slice(k)
        u[sl] = penalized_step(x[sl], tree.cond_level(u, k), beta * w[k] * dt[k])
    return u


def direct_recursion(tree: FiltrationTree, grid: TimeGrid, x) -> np.ndarray:
    """Smallest non-negative supermartingale above X at positive-weight times."""
    x = _obstacle(tree, grid, x)
    u = np.zeros(tree.n_nodes)
    for k in range(tree.n_levels - 2, -1, -1):
        sl = tree.level_slice(k)
        cont = tree.cond_level(u, k)
        u[sl] = np.maximum(x[sl], cont) if grid.weights[k] > 0 else cont
    return u


def snell_envelope(tree: FiltrationTree, x) -> np.ndarray:
    """Envelope with every real time weighted (domination everywhere)."""
    grid = TimeGrid.uniform(tree.n_levels - 1)
    return direct_recursion(tree, grid, x)


def doob_meyer(tree: FiltrationTree, u, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Split a supermartingale as U = M - A, A predictable, A(root) = 0."""
    u = tree.check_process(u)
    ok, worst = is_supermartingale(tree, u, tol)
    if not ok:
        raise ValueError(f"not a supermartingale (worst violation {worst:.3g})")
    drop = u - tree.cond_next(u)
    a = np.zeros(tree.n_nodes)
    for k in range(1, tree.n_levels):
        sl = tree.level_slice(k)
        par = tree.parents[sl]
        a[sl] = a[par] + drop[par]
    return u + a, a


def domination_violation(tree: FiltrationTree, grid: TimeGrid, x, u) -> float:
    mask = grid.weighted_nodes(tree)
    gap = np.asarray(x, dtype=float)[mask] - np.asarray(u, dtype=float)[mask]
    return float(max(gap.max(initial=0.0), 0.0))


def strong_envelope(tree: FiltrationTree, grid: TimeGrid, x,
                    schedule: BetaSchedule | None = None) -> EnvelopeResult:
    """Run the beta sweep, cross-check against the direct recursion and return
    the exact envelope with its Doob-Meyer pair and the sweep diagnostics."""
    schedule = schedule or BetaSchedule()
    x = _obstacle(tree, grid, x)
    u = direct_recursion(tree, grid, x)
    if np.any(u < 0):
        raise AssertionError("envelope went negative")

    rows: list[SweepRow] = []
    prev = None
    converged = False
    for beta in schedule.betas():
        ub = penalized_envelope(tree, grid, x, beta)
        step = math.nan if prev is None else float(np.max(np.abs(ub - prev)))
        rows.append(SweepRow(beta, float(np.max(np.abs(u - ub))), step,
                             domination_violation(tree, grid, x, ub)))
        prev = ub
        if step < schedule.tol_gap:
            converged = True
            break

    scale = 1.0 + float(np.max(np.abs(x)))
    cross_tol = max(10 * schedule.tol_gap, schedule.tol_dom * scale)
    if not converged and rows[-1].sup_gap >= cross_tol:
        raise NonConvergence(
            f"beta sweep stopped at beta={rows[-1].beta:g} with gap {rows[-1].sup_gap:.3g} "
            f"from the direct recursion (tolerance {cross_tol:.3g})"
        )

    m, a = doob_meyer(tree, u)
    return EnvelopeResult(u, m, a, rows, converged, domination_violation(tree, grid, x, u))


def epsilon_optimal_time(tree: FiltrationTree, grid: TimeGrid, u, x, eps: float,
                         start: int = 0) -> StoppingTime:
    """First node at or after level ``start``, at a positive-weight time, with
    X >= U - eps; the cemetery if there is none."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    u = tree.check_process(u)
    x = tree.check_process(x)
    flags = (tree.level >= start) & grid.weighted_nodes(tree) & (x >= u - eps)
    return StoppingTime(tree, flags)


def epsilon_optimal_after(tree: FiltrationTree, grid: TimeGrid, u, x, eps: float,
                          sigma: StoppingTime) -> StoppingTime:
    """tau^eps started at a stopping time sigma instead of a fixed level."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    flags = sigma.reached & grid.weighted_nodes(tree) & (np.asarray(x) >= np.asarray(u) - eps)
    return StoppingTime(tree, flags)
