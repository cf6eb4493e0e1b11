"""Seeded sampling of stopping times and test processes, and the full
verification suite run on one instance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import verification as vf
from .engine import (
    direct_recursion,
    doob_meyer,
    epsilon_optimal_time,
    penalized_envelope,
    strong_envelope,
)
from .instances import Instance
from .oracle import count_stopping_times, envelope_by_value_iteration, root_value_by_enumeration
from .tree import (
    StoppingTime,
    earliest,
    is_supermartingale,
    latest,
    value_at_stopping_time,
)

EPSILONS = (1e-3, 1e-1, 1.0)
LP_ORDERS = (1, 2, 4)
ORACLE_CAP = 4096


@dataclass(frozen=True)
class SuiteSizes:
    sandwiches: int = 20
    svi_triples: int = 50
    identity_pairs: int = 5
    apriori_draws: int = 5
    stability_pairs: int = 5
    n_max: int = 64


@dataclass(frozen=True)
class Tolerances:
    residual: float = 1e-10
    estimate: float = 1e-9

    @classmethod
    def parse(cls, items, base: "Tolerances | None" = None) -> "Tolerances":
        """Apply ``key=value`` overrides (a list, or one comma-separated string)."""
        if isinstance(items, str):
            items = [s for s in items.split(",") if s.strip()]
        base = base or cls()
        kw = {"residual": base.residual, "estimate": base.estimate}
        for item in items or []:
            key, _, val = item.partition("=")
            key = key.strip()
            if key not in kw or not val:
                raise ValueError(f"bad tolerance override {item!r}; use residual=... or estimate=...")
            kw[key] = float(val)
        return cls(**kw)


def random_stopping_time(inst: Instance, rng: np.random.Generator, u, eligible_only: bool = True) -> StoppingTime:
    """Stop where U - X falls below a random threshold, or on random coin flips."""
    tree, grid, x = inst.tree, inst.grid, inst.obstacle
    gap = np.where(grid.weighted_nodes(tree), u - x, np.inf)
    finite = gap[np.isfinite(gap)]
    theta = rng.uniform(0.0, finite.max()) if finite.size else 0.0
    q = rng.uniform(0.0, 0.5)
    flags = (gap <= theta) | (rng.random(tree.n_nodes) < q)
    if eligible_only:
        flags &= grid.stop_eligible(tree)
    return StoppingTime(tree, flags)


def random_pair(inst: Instance, rng, u, eligible_only: bool = True) -> tuple[StoppingTime, StoppingTime]:
    a = random_stopping_time(inst, rng, u, eligible_only)
    b = random_stopping_time(inst, rng, u, eligible_only)
    return earliest(a, b), latest(a, b)


def obstacle_hat(inst: Instance, u) -> np.ndarray:
    """X at weighted nodes, U elsewhere."""
    return np.where(inst.grid.weighted_nodes(inst.tree), inst.obstacle, u)


def random_sandwich(inst: Instance, rng, u) -> np.ndarray:
    lo = obstacle_hat(inst, u)
    return lo + rng.random(inst.tree.n_nodes) * (u - lo)


def random_in_k(inst: Instance, rng, u) -> np.ndarray:
    """A process V >= X at weighted nodes; sometimes below U, sometimes above."""
    n = inst.tree.n_nodes
    base = obstacle_hat(inst, u) if rng.random() < 0.5 else u
    v = base + rng.exponential(rng.uniform(0.01, 1.0), size=n) * (rng.random(n) < 0.7)
    free = ~inst.grid.weighted_nodes(inst.tree)
    return np.where(free, rng.normal(0.0, 1.0, size=n) + u, v)


class _Collector:
    def __init__(self):
        self.reports: dict[str, vf.CheckReport] = {}

    def add(self, rep: vf.CheckReport) -> None:
        cur = self.reports.get(rep.name)
        if cur is None:
            self.reports[rep.name] = vf.CheckReport(rep.name, rep.passed, rep.worst_residual, rep.witness)
            return
        cur.worst_residual = max(cur.worst_residual, rep.worst_residual)
        if cur.passed and not rep.passed:
            cur.witness = rep.witness
        cur.passed = cur.passed and rep.passed

    def bound(self, name: str, value: float, limit: float, witness: str) -> None:
        ok = value <= limit
        self.add(vf.CheckReport(name, ok, value - limit, None if ok else witness))

    def results(self) -> list[vf.CheckReport]:
        return list(self.reports.values())


def verify_instance(inst: Instance, rng: np.random.Generator, sizes: SuiteSizes = SuiteSizes(),
                    tol: Tolerances = Tolerances()) -> list[vf.CheckReport]:
    tree, grid, x = inst.tree, inst.grid, inst.obstacle
    scale = 1.0 + float(np.max(np.abs(x)))
    out = _Collector()

    res = strong_envelope(tree, grid, x, inst.schedule)
    u, m, a = res.U, res.M, res.A
    for rep in vf.envelope_invariants(tree, grid, x, u, m, a, inst.schedule.tol_dom):
        out.add(rep)
    ok, worst = is_supermartingale(tree, u, tol.residual)
    out.add(vf.CheckReport("supermartingale", ok and u.min() >= 0, max(worst, -u.min())))

    # penalization: monotone in beta, limit equals the direct recursion
    prev = None
    for beta in inst.schedule.betas():
        ub = penalized_envelope(tree, grid, x, beta)
        if prev is not None:
            out.bound("penalization_monotone", float(np.max(prev - ub)), 1e-12, f"decrease at beta={beta:g}")
        prev = ub
    out.bound("penalization_limit", float(np.max(np.abs(prev - u))), inst.schedule.tol_dom * scale,
              f"gap at beta={inst.schedule.betas()[-1]:g}")

    # Skorohod condition over canonical and random sandwiched processes
    hat = obstacle_hat(inst, u)
    candidates = [("X clipped", np.minimum(hat, u)), ("U", u), ("midpoint", (hat + u) / 2)]
    candidates += [(f"random #{i}", random_sandwich(inst, rng, u)) for i in range(sizes.sandwiches)]
    for label, xs in candidates:
        r = vf.skorohod_residual(tree, grid, u, a, xs, x)
        out.bound("skorohod", abs(r), tol.residual * scale, f"X* = {label}: residual {r:.3g}")
    out.add(vf.complementarity_check(tree, grid, u, a, x))

    # negative controls must be rejected whenever there is something to detect
    shifted = vf.complementarity_check(tree, grid, u + 1, a, x)
    trivial = float(np.max(a)) <= 1e-10
    out.add(vf.CheckReport("negative_control_shift", trivial or (not shifted.passed and bool(shifted.witness)),
                           0.0, None if trivial or not shifted.passed else "U+1 accepted"))
    u1 = penalized_envelope(tree, grid, x, 1.0)
    if float(np.max(np.abs(u1 - u))) > inst.schedule.tol_dom * scale:
        _, a1 = doob_meyer(tree, u1)
        rejected = (not vf.complementarity_check(tree, grid, u1, a1, x).passed
                    or not vf.domination_check(tree, grid, u1, x, inst.schedule.tol_dom).passed)
        out.add(vf.CheckReport("negative_control_beta1", rejected, 0.0,
                               None if rejected else "U^1 accepted"))

    # epsilon-optimal stopping
    for eps in EPSILONS:
        for start in range(tree.n_levels - 1):
            tau = epsilon_optimal_time(tree, grid, u, x, eps, start)
            out.bound("vtau", vf.vtau_residual(tree, u, tau, start), tol.residual,
                      f"eps={eps:g}, t={start}")
            out.bound("flat_A", vf.flat_residual(tree, a, tau, start), tol.residual,
                      f"eps={eps:g}, t={start}")
            gain = value_at_stopping_time(np.where(tree.is_cemetery, 0.0, x), tau).expectation()
            target = float(np.dot(tree.path_prob[tree.level_slice(start)], u[tree.level_slice(start)]))
            out.bound("eps_optimality", target - eps - gain, tol.residual,
                      f"eps={eps:g}, t={start}: E[X_tau]={gain:.6g}")

    # SVI and the uniqueness identity
    for i in range(sizes.svi_triples):
        v = random_in_k(inst, rng, u)
        t1, t2 = random_pair(inst, rng, u, eligible_only=False)
        _, low = vf.svi_residual(tree, grid, u, v, t1, t2, x)
        out.bound("svi", -low, tol.residual, f"triple #{i}: min {low:.3g}")
    pairs = [(u, penalized_envelope(tree, grid, x, 1.0))]
    pairs += [(rng.normal(size=tree.n_nodes), rng.normal(size=tree.n_nodes)) for _ in range(sizes.identity_pairs)]
    for y, y2 in pairs:
        t1, t2 = random_pair(inst, rng, u, eligible_only=False)
        out.add(vf.uniqueness_identity_check(tree, y, y2, t1, t2, tol.residual))

    # a priori estimates
    for _ in range(sizes.apriori_draws):
        s1, s2 = random_pair(inst, rng, u)
        eps = float(rng.choice(EPSILONS))
        out.add(_renamed(vf.apriori_increment_check(tree, grid, x, u, a, s1, s2, eps, tol.estimate),
                         "apriori_increment"))
        for p in LP_ORDERS:
            out.add(_renamed(vf.apriori_lp_check(tree, grid, x, a, s1, s2, p, tol.estimate), "apriori_lp"))
    for _ in range(sizes.stability_pairs):
        noise = rng.normal(0.0, rng.uniform(0.01, 1.0), size=tree.n_nodes)
        x2 = np.where(tree.is_cemetery, 0.0, x + noise * (rng.random(tree.n_nodes) < 0.5))
        t1, t2 = random_pair(inst, rng, u)
        out.add(vf.stability_check(tree, grid, x, x2, t1, t2, tol.estimate))

    out.add(vf.monotone_convergence_check(tree, grid, x, sizes.n_max, tol=tol.residual))

    # brute-force oracles on small trees
    if count_stopping_times(tree, grid.stop_eligible(tree)) <= ORACLE_CAP:
        root = root_value_by_enumeration(tree, grid, x, ORACLE_CAP)
        out.bound("oracle_enumeration", abs(root - u[0]), 1e-12, f"enumeration {root!r} vs {u[0]!r}")
    start = max(float(np.max(x)), 0.0) + 1.0
    vi = envelope_by_value_iteration(tree, grid, x, start)
    out.bound("oracle_value_iteration", float(np.max(np.abs(vi - direct_recursion(tree, grid, x)))), 1e-11,
              "value iteration disagrees")
    return out.results()


def _renamed(rep: vf.CheckReport, name: str) -> vf.CheckReport:
    return vf.CheckReport(name, rep.passed, rep.worst_residual, rep.witness)
