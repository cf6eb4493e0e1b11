"""Executable checks for the Skorohod and variational characterizations of
the strong envelope and for the a priori estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import direct_recursion, epsilon_optimal_after
from .tree import (
    FiltrationTree,
    RandomVariableAtStop,
    StoppingTime,
    TimeGrid,
    conditional_value_at,
    lp_norm,
    quadratic_variation,
    stochastic_integral,
    value_at_stopping_time,
)

SANDWICH_TOL = 1e-10


@dataclass
class CheckReport:
    name: str
    passed: bool
    worst_residual: float
    witness: str | None = None

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "worst_residual": float(self.worst_residual),
            "witness": self.witness,
        }


def _increments(tree: FiltrationTree, a) -> np.ndarray:
    """inc[c] = A(c) - A(parent(c)); 0 at the root."""
    a = tree.check_process(a)
    inc = np.zeros(tree.n_nodes)
    inc[1:] = a[1:] - a[tree.parents[1:]]
    return inc


def _outgoing_increment(tree: FiltrationTree, a) -> np.ndarray:
    """Largest increment of A out of each node (0 at the leaves)."""
    inc = _increments(tree, a)
    out = np.zeros(tree.n_nodes)
    np.maximum.at(out, tree.parents[1:], inc[1:])
    return out


def _require_stop_eligible(tree, grid, *taus):
    ok = grid.stop_eligible(tree)
    for tau in taus:
        if np.any(tau.hit & ~ok):
            raise ValueError("stopping time stops at a zero-weight time")


def _at_stop_of(tau: StoppingTime, nodes: np.ndarray) -> np.ndarray:
    return tau.stop_node[nodes]


def skorohod_residual(tree: FiltrationTree, grid: TimeGrid, u, a, xstar, x=None) -> float:
    """E[ sum_k (U_k - X*_k) (A_{k+1} - A_k) ]."""
    u = tree.check_process(u)
    xstar = tree.check_process(xstar)
    if x is not None:
        w = grid.weighted_nodes(tree)
        x = tree.check_process(x)
        if np.any((xstar < x - SANDWICH_TOL) & w) or np.any((xstar > u + SANDWICH_TOL) & w):
            raise ValueError("X* is not sandwiched between X and U at weighted times")
    inc = _increments(tree, a)
    par = tree.parents[1:]
    return float(np.sum(tree.path_prob[1:] * (u[par] - xstar[par]) * inc[1:]))


def complementarity_check(tree: FiltrationTree, grid: TimeGrid, u, a, x,
                          inc_tol: float = 1e-10, touch_tol: float = 1e-9) -> CheckReport:
    """A may only grow out of weighted nodes where U touches X."""
    u = tree.check_process(u)
    x = tree.check_process(x)
    d_a = _outgoing_increment(tree, a)
    w = grid.weighted_nodes(tree)
    gap = np.where(w, np.abs(u - x), np.inf)
    bad = (d_a > inc_tol) & (gap > touch_tol)
    worst = float(np.max(np.where(d_a > inc_tol, gap, 0.0), initial=0.0))
    if not bad.any():
        return CheckReport("complementarity", True, worst)
    n = int(np.flatnonzero(bad)[0])
    where = "zero-weight time" if not w[n] else f"U - X = {u[n] - x[n]:.6g}"
    return CheckReport(
        "complementarity", False, worst,
        f"node {tree.path(n)!r}: A grows by {d_a[n]:.6g} with {where}",
    )


def domination_check(tree: FiltrationTree, grid: TimeGrid, u, x, tol: float = 1e-6) -> CheckReport:
    u = tree.check_process(u)
    x = tree.check_process(x)
    gap = np.where(grid.weighted_nodes(tree), x - u, -np.inf)
    worst = float(max(gap.max(), 0.0))
    if worst <= tol:
        return CheckReport("domination", True, worst)
    n = int(np.argmax(gap))
    return CheckReport("domination", False, worst,
                       f"node {tree.path(n)!r}: X - U = {gap[n]:.6g}")


def svi_residual(tree: FiltrationTree, grid: TimeGrid, u, v, tau1: StoppingTime,
                 tau2: StoppingTime, x=None):
    """E[ sum_{s=tau1+1}^{tau2} (U - V)_{s-1} dU_s | F_tau1 ] per tau1-atom.

    Returns ``(values, minimum)``.
    """
    u = tree.check_process(u)
    v = tree.check_process(v)
    if x is not None:
        w = grid.weighted_nodes(tree)
        if np.any((v < tree.check_process(x) - SANDWICH_TOL) & w):
            raise ValueError("V is not in K (V < X at a weighted time)")
    if not tau1.precedes(tau2):
        raise ValueError("tau1 must not exceed tau2")
    integral = stochastic_integral(tree, u - v, u, tau1, tau2)
    res = conditional_value_at(integral, tau1)
    return res, float(res.values.min())


def uniqueness_identity_check(tree: FiltrationTree, y, y2, tau1: StoppingTime,
                              tau2: StoppingTime, tol: float = 1e-10) -> CheckReport:
    """Pathwise summation by parts for D = Y - Y':
    D_tau2^2 - D_tau1^2 = 2 sum D_{s-1} dD_s + [D]_tau2 - [D]_tau1."""
    d = tree.check_process(y) - tree.check_process(y2)
    if not tau1.precedes(tau2):
        raise ValueError("tau1 must not exceed tau2")
    ends = np.flatnonzero(tau2.hit)
    starts = _at_stop_of(tau1, ends)
    lhs = d[ends] ** 2 - d[starts] ** 2
    qv = quadratic_variation(tree, d)
    integral = stochastic_integral(tree, d, d, tau1, tau2)
    rhs = 2 * integral.values + qv[ends] - qv[starts]
    err = np.abs(lhs - rhs)
    worst = float(err.max())
    if worst <= tol:
        return CheckReport("uniqueness_identity", True, worst)
    n = int(ends[np.argmax(err)])
    return CheckReport("uniqueness_identity", False, worst,
                       f"path ending at {tree.path(n)!r}: lhs {lhs.max():.6g} vs rhs")


def apriori_increment_check(tree: FiltrationTree, grid: TimeGrid, x, u, a,
                            sigma1: StoppingTime, sigma2: StoppingTime, eps: float,
                            tol: float = 1e-9) -> CheckReport:
    """E[A_s2 - A_s1 | F_s1] <= E[X_{tau^eps_s1 ^ s2} - X_s2 | F_s1] + eps."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not sigma1.precedes(sigma2):
        raise ValueError("sigma1 must not exceed sigma2")
    _require_stop_eligible(tree, grid, sigma1, sigma2)
    x = tree.check_process(x)
    a = tree.check_process(a)
    tau = epsilon_optimal_after(tree, grid, u, x, eps, sigma1)
    rho = StoppingTime(tree, sigma2.flags | tau.flags)
    lhs = (conditional_value_at(value_at_stopping_time(a, sigma2), sigma1).values
           - a[sigma1.hit])
    rhs = (conditional_value_at(value_at_stopping_time(x, rho), sigma1).values
           - conditional_value_at(value_at_stopping_time(x, sigma2), sigma1).values + eps)
    excess = lhs - rhs
    worst = float(excess.max())
    if worst <= tol:
        return CheckReport("apriori_increment", True, worst)
    n = int(np.flatnonzero(sigma1.hit)[np.argmax(excess)])
    return CheckReport("apriori_increment", False, worst,
                       f"sigma1-atom {tree.path(n)!r}: {lhs.max():.6g} > {rhs[np.argmax(excess)]:.6g}")


def _sup_between(tree: FiltrationTree, grid: TimeGrid, values, tau1: StoppingTime,
                 tau2: StoppingTime, ends: np.ndarray) -> np.ndarray:
    """For each tau2 stop node, max of ``values`` over the path segment
    [tau1, tau2] restricted to stop-eligible nodes, the tau2 node included."""
    values = np.broadcast_to(values, (ends.size, tree.n_levels))
    anc = tree.ancestors[ends]
    lo = tree.level[_at_stop_of(tau1, ends)][:, None]
    hi = tree.level[ends][:, None]
    ks = np.arange(tree.n_levels)[None, :]
    eligible = grid.stop_eligible(tree)
    inside = (ks >= lo) & (ks <= hi) & (anc >= 0)
    inside &= np.where(anc >= 0, eligible[np.maximum(anc, 0)], False) | (ks == hi)
    return np.max(np.where(inside, values, -np.inf), axis=1)


def _segment(tree, values, ends):
    """values at each ancestor level of the end nodes, shape (len(ends), n_levels)."""
    anc = tree.ancestors[ends]
    return np.where(anc >= 0, np.asarray(values)[np.maximum(anc, 0)], 0.0)


def apriori_lp_check(tree: FiltrationTree, grid: TimeGrid, x, a, sigma1: StoppingTime,
                     sigma2: StoppingTime, p: float, tol: float = 1e-9) -> CheckReport:
    """||A_s2 - A_s1||_p <= p || sup_{s1 <= s <= s2} |X_s2 - X_s| ||_p."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if not sigma1.precedes(sigma2):
        raise ValueError("sigma1 must not exceed sigma2")
    _require_stop_eligible(tree, grid, sigma1, sigma2)
    x = tree.check_process(x)
    a = tree.check_process(a)
    ends = np.flatnonzero(sigma2.hit)
    probs = tree.path_prob[ends]
    inc = RandomVariableAtStop(sigma2, ends, a[ends] - a[_at_stop_of(sigma1, ends)], probs)
    dev = np.abs(x[ends][:, None] - _segment(tree, x, ends))
    sup = _sup_between(tree, grid, dev, sigma1, sigma2, ends)
    sup_rv = RandomVariableAtStop(sigma2, ends, sup, probs)
    lhs, rhs = lp_norm(inc, p), p * lp_norm(sup_rv, p)
    worst = lhs - rhs
    if worst <= tol:
        return CheckReport(f"apriori_lp_p{p:g}", True, worst)
    return CheckReport(f"apriori_lp_p{p:g}", False, worst,
                       f"{sigma1.describe()} -> {sigma2.describe()}: {lhs:.6g} > {rhs:.6g}")


def stability_check(tree: FiltrationTree, grid: TimeGrid, x1, x2, tau1: StoppingTime,
                    tau2: StoppingTime, tol: float = 1e-9) -> CheckReport:
    """Stability of the envelope in the obstacle, on [tau1, tau2] and on the
    whole horizon.

    Interval form:
        E[D_tau1^2 + [D]_tau2 - [D]_tau1]
            <= E[D_tau2^2] + 4 ||S|| (||R1|| + ||R2||)
    with D = U2 - U1, S = sup |X2 - X1|, Ri = sup |Xi - Xi_tau2| over
    [tau1, tau2] (L2 norms). E[D_tau2^2] vanishes when tau2 is the cemetery.
    Horizon form (tau1 = 0, tau2 = cemetery):
        E[D]_T <= 4 ||S|| (||R1|| + ||R2||) + E[(X2_T - X1_T)^2].
    """
    x1 = tree.check_process(x1)
    x2 = tree.check_process(x2)
    if not tau1.precedes(tau2):
        raise ValueError("tau1 must not exceed tau2")
    _require_stop_eligible(tree, grid, tau1, tau2)
    u1 = direct_recursion(tree, grid, x1)
    u2 = direct_recursion(tree, grid, x2)
    d = u2 - u1
    qv = quadratic_variation(tree, d)

    def bound(t1, t2):
        ends = np.flatnonzero(t2.hit)
        probs = tree.path_prob[ends]
        starts = _at_stop_of(t1, ends)

        def l2(v):
            return float(np.sqrt(np.dot(probs, v ** 2)))

        s = _sup_between(tree, grid, np.abs(_segment(tree, x2 - x1, ends)), t1, t2, ends)
        r1 = _sup_between(tree, grid, np.abs(_segment(tree, x1, ends) - x1[ends][:, None]), t1, t2, ends)
        r2 = _sup_between(tree, grid, np.abs(_segment(tree, x2, ends) - x2[ends][:, None]), t1, t2, ends)
        lhs_qv = float(np.dot(probs, qv[ends] - qv[starts]))
        start_sq = float(np.dot(probs, d[starts] ** 2))
        end_sq = float(np.dot(probs, d[ends] ** 2))
        terminal = float(np.dot(probs, (x2[ends] - x1[ends]) ** 2))
        return lhs_qv, start_sq, end_sq, terminal, 4 * l2(s) * (l2(r1) + l2(r2))

    qv_gap, start_sq, end_sq, _, core = bound(tau1, tau2)
    excess_interval = (start_sq + qv_gap) - (end_sq + core)
    horizon = bound(StoppingTime.at_level(tree, 0), StoppingTime.never(tree))
    excess_horizon = horizon[0] - (horizon[4] + horizon[3])
    worst = max(excess_interval, excess_horizon)
    if worst <= tol:
        return CheckReport("stability", True, worst)
    which = "interval" if excess_interval > tol else "horizon"
    return CheckReport("stability", False, worst,
                       f"{which} form on {tau1.describe()} -> {tau2.describe()}")


def monotone_convergence_check(tree: FiltrationTree, grid: TimeGrid, x, n_max: int,
                               ns=None, tol: float = 1e-10) -> CheckReport:
    """SE(X - 1/n) increases in n and ends within 1/n_max of SE(X)."""
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    x = tree.check_process(x)
    live = ~tree.is_cemetery
    target = direct_recursion(tree, grid, x)
    ns = sorted(set(ns)) if ns is not None else list(range(1, n_max + 1))
    if ns[-1] != n_max:
        ns.append(n_max)
    prev = None
    worst = 0.0
    for n in ns:
        se = direct_recursion(tree, grid, np.where(live, x - 1.0 / n, 0.0))
        if prev is not None:
            drop = float(np.max(prev - se))
            worst = max(worst, drop)
            if drop > tol:
                return CheckReport("monotone_convergence", False, drop,
                                   f"SE(X - 1/{n}) decreased by {drop:.3g}")
        prev = se
    dist = float(np.max(np.abs(target - prev)))
    worst = max(worst, dist - 1.0 / n_max)
    if dist > 1.0 / n_max + tol:
        return CheckReport("monotone_convergence", False, worst,
                           f"|SE(X - 1/{n_max}) - SE(X)| = {dist:.3g}")
    return CheckReport("monotone_convergence", True, worst)


def vtau_residual(tree: FiltrationTree, u, tau: StoppingTime, start: int) -> float:
    """max |E[U_tau | F_t] - U_t| over level-``start`` atoms."""
    u = tree.check_process(u)
    got = conditional_value_at(value_at_stopping_time(u, tau), StoppingTime.at_level(tree, start))
    return float(np.max(np.abs(got.values - u[got.nodes])))


def flat_residual(tree: FiltrationTree, a, tau: StoppingTime, start: int) -> float:
    """max |A_tau - A_t| pathwise."""
    a = tree.check_process(a)
    ends = np.flatnonzero(tau.hit)
    return float(np.max(np.abs(a[ends] - a[tree.ancestors[ends, start]])))


def envelope_invariants(tree: FiltrationTree, grid: TimeGrid, x, u, m, a,
                        tol_dom: float = 1e-6) -> list[CheckReport]:
    """Structural checks on an envelope and its decomposition."""
    out = [domination_check(tree, grid, u, x, tol_dom)]
    dec = float(np.max(np.abs(u - (m - a))))
    out.append(CheckReport("decomposition", dec <= 1e-12, dec))
    mart = float(np.max(np.abs((tree.cond_next(m) - m)[tree.n_children > 0])))
    out.append(CheckReport("martingale_part", mart <= 1e-10, mart))
    inc = _increments(tree, a)
    spread = np.zeros(tree.n_nodes)
    np.maximum.at(spread, tree.parents[1:], inc[1:])
    low = np.full(tree.n_nodes, np.inf)
    np.minimum.at(low, tree.parents[1:], inc[1:])
    internal = tree.n_children > 0
    pred = float(np.max((spread - low)[internal]))
    mono = float(max(-inc.min(), 0.0, abs(a[0])))
    out.append(CheckReport("increasing_predictable", pred <= 1e-12 and mono <= 1e-12, max(pred, mono)))
    return out


__all__ = [
    "CheckReport",
    "apriori_increment_check",
    "apriori_lp_check",
    "complementarity_check",
    "domination_check",
    "envelope_invariants",
    "flat_residual",
    "monotone_convergence_check",
    "skorohod_residual",
    "stability_check",
    "svi_residual",
    "uniqueness_identity_check",
    "vtau_residual",
]
