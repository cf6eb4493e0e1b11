"""Machine-readable run reports: envelope tables, beta sweeps, verification
and oracle summaries."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time

import numpy as np

from . import verification as vf
from .engine import (
    BetaSchedule,
    direct_recursion,
    domination_violation,
    penalized_envelope,
    strong_envelope,
)
from .instances import RNG_ALGORITHM, Instance, generate_random
from .oracle import envelope_by_value_iteration, root_value_by_enumeration
from .suite import SuiteSizes, Tolerances, verify_instance
from .tree import is_supermartingale

SWEEP_HEADER = ("beta", "sup_gap", "domination_violation")
ORACLE_SEED_OFFSET = 1_000_000


def _digest(report: dict) -> str:
    body = {k: v for k, v in report.items() if k not in ("timings", "report_digest")}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"), allow_nan=True).encode()
    return hashlib.sha256(blob).hexdigest()


def finalize(report: dict) -> dict:
    report["report_digest"] = _digest(report)
    return report


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


def envelope_report(inst: Instance) -> dict:
    t0 = time.perf_counter()
    tree, grid, x = inst.tree, inst.grid, inst.obstacle
    res = strong_envelope(tree, grid, x, inst.schedule)
    checks = vf.envelope_invariants(tree, grid, x, res.U, res.M, res.A, inst.schedule.tol_dom)
    ok, worst = is_supermartingale(tree, res.U)
    checks.append(vf.CheckReport("supermartingale", ok, worst))
    rows = [
        {"path": tree.path(n), "level": int(tree.level[n]), "X": float(x[n]),
         "U": float(res.U[n]), "M": float(res.M[n]), "A": float(res.A[n])}
        for n in range(tree.n_nodes)
    ]
    report = {
        "command": "envelope",
        "instance_digest": inst.digest(),
        "nodes": rows,
        "U": [float(v) for v in res.U],
        "M": [float(v) for v in res.M],
        "A": [float(v) for v in res.A],
        "domination_violation": res.domination_violation,
        "beta_sweep": [
            {"beta": r.beta, "sup_gap": r.sup_gap, "domination_violation": r.domination_violation}
            for r in res.sweep
        ],
        "sweep_converged": res.converged,
        "checks": [c.as_dict() for c in checks],
        "passed": all(c.passed for c in checks),
        "timings": {"seconds": time.perf_counter() - t0},
    }
    return finalize(report)


def convergence_rows(inst: Instance, beta_max: float | None = None) -> list[tuple[float, float, float]]:
    """Full beta sweep (no early stop) against the direct recursion."""
    sched = inst.schedule
    if beta_max is not None:
        sched = BetaSchedule(sched.beta_0, sched.growth, beta_max, sched.tol_gap, sched.tol_dom)
    u = direct_recursion(inst.tree, inst.grid, inst.obstacle)
    rows = []
    for beta in sched.betas():
        ub = penalized_envelope(inst.tree, inst.grid, inst.obstacle, beta)
        rows.append((beta, float(np.max(np.abs(u - ub))),
                     domination_violation(inst.tree, inst.grid, inst.obstacle, ub)))
    return rows


def convergence_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for beta, gap, dom in rows:
        w.writerow([repr(beta), repr(gap), repr(dom)])
    return buf.getvalue()


def random_instance(seed: int) -> Instance:
    """Verification instance for a seed: depth 1..6, branching 1..3."""
    rng = np.random.default_rng(seed)
    depth = int(rng.integers(1, 7))
    branching = int(rng.integers(1, 4))
    return generate_random(seed, depth=depth, branching=branching).resolve()


def verify_report(instances: list[tuple[str, Instance, object]], sizes: SuiteSizes = SuiteSizes(),
                  tol: Tolerances = Tolerances()) -> dict:
    """``instances`` holds (label, instance, draw seed) triples; a draw seed
    is anything :func:`numpy.random.default_rng` accepts."""
    t0 = time.perf_counter()
    entries = []
    for label, inst, seed in instances:
        checks = verify_instance(inst, np.random.default_rng(seed), sizes, tol)
        entries.append({
            "label": label,
            "instance_digest": inst.digest(),
            "passed": all(c.passed for c in checks),
            "checks": [c.as_dict() for c in checks],
        })
    failures = [
        {"instance": e["label"], **c} for e in entries for c in e["checks"] if not c["passed"]
    ]
    report = {
        "command": "verify",
        "rng": RNG_ALGORITHM,
        "tolerances": {"residual": tol.residual, "estimate": tol.estimate},
        "instances": entries,
        "failures": failures,
        "passed": not failures,
        "timings": {"seconds": time.perf_counter() - t0},
    }
    return finalize(report)


def oracle_report(max_nodes: int, seeds: int) -> dict:
    t0 = time.perf_counter()
    worst_root = 0.0
    worst_vi = 0.0
    failures = []
    for s in range(seeds):
        seed = ORACLE_SEED_OFFSET + s
        rng = np.random.default_rng(seed)
        cfg = generate_random(seed, depth=int(rng.integers(1, 5)), branching=int(rng.integers(1, 4)),
                              max_nodes=max_nodes)
        inst = cfg.resolve()
        tree, grid, x = inst.tree, inst.grid, inst.obstacle
        u = strong_envelope(tree, grid, x, inst.schedule).U
        root = root_value_by_enumeration(tree, grid, x)
        vi = envelope_by_value_iteration(tree, grid, x, max(float(x.max()), 0.0) + 1.0)
        d_root = abs(root - u[0])
        d_vi = float(np.max(np.abs(vi - direct_recursion(tree, grid, x))))
        worst_root, worst_vi = max(worst_root, d_root), max(worst_vi, d_vi)
        if d_root > 1e-12 or d_vi > 1e-11:
            failures.append({"seed": seed, "instance_digest": inst.digest(),
                             "root_gap": d_root, "process_gap": d_vi})
    report = {
        "command": "oracle",
        "rng": RNG_ALGORITHM,
        "max_nodes": max_nodes,
        "seeds": seeds,
        "worst_root_gap": worst_root,
        "worst_process_gap": worst_vi,
        "failures": failures,
        "passed": not failures,
        "timings": {"seconds": time.perf_counter() - t0},
    }
    return finalize(report)
