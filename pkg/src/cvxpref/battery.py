"""Standard oracle battery: each check compares a fast path with an independent reference."""

from __future__ import annotations

import numpy as np

from . import admm, finetune, oracle, patterns, program
from .oracle import OracleReport

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["suite", "passed", "reports"],
    "properties": {
        "suite": {"type": "string"},
        "passed": {"type": "boolean"},
        "reports": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["oracle", "instance", "value", "target", "tolerance", "passed", "gap"],
                "properties": {
                    "oracle": {"type": "string"},
                    "instance": {"type": "object"},
                    "value": {"type": ["number", "string"]},
                    "target": {"type": ["number", "string"]},
                    "tolerance": {"type": ["number", "string"]},
                    "passed": {"type": "boolean"},
                    "gap": {"type": ["number", "string"]},
                },
            },
        },
    },
}


def small_instance(seed: int, n: int = 6, d: int = 2, beta_reg: float = 0.1):
    """Random ``X``, random +-1 targets and the fully enumerated pattern set."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = np.sign(rng.standard_normal(n))
    y[y == 0] = 1.0
    return program.ConvexProgram(X, patterns.enumerate_patterns(X), y, beta_reg)


def _desc(seed, prog=None, **extra) -> dict:
    doc = {"seed": seed}
    if prog is not None:
        doc.update(n=prog.n, d=prog.d, P=prog.P)
    doc.update(extra)
    return doc


def _check(name, instance, value, target, tolerance, gap_based=True) -> OracleReport:
    rep = OracleReport(name, instance, float(value), float(target), float(tolerance), False)
    diff = rep.gap if gap_based else abs(value - target)
    rep.passed = bool(np.isfinite(diff) and diff <= tolerance)
    return rep


def check_adjoints(seed: int = 0) -> list[OracleReport]:
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((5, 3))
    ps = patterns.sample_patterns(X, 4, seed)
    prog = program.ConvexProgram(X, ps, rng.standard_normal(5), 0.1)
    F, G = oracle.dense_F(prog), oracle.dense_G(prog)
    u = rng.standard_normal(prog.var_dim)
    r = rng.standard_normal(prog.n)
    s = rng.standard_normal(prog.slack_dim)
    desc = _desc(seed, prog)
    return [
        _check("F_matches_dense", desc, np.max(np.abs(program.apply_F(prog, u) - F @ u)), 0.0, 1e-12),
        _check("Ft_matches_dense", desc, np.max(np.abs(program.apply_F_transpose(prog, r) - F.T @ r)), 0.0, 1e-12),
        _check("G_matches_dense", desc, np.max(np.abs(program.apply_G(prog, u) - G @ u)), 0.0, 1e-12),
        _check("Gt_matches_dense", desc, np.max(np.abs(program.apply_G_transpose(prog, s) - G.T @ s)), 0.0, 1e-12),
    ]


def check_prox(seed: int = 0, groups: int = 50, d: int = 3) -> OracleReport:
    """Optimality conditions of the group shrinkage at random points.

    ``v = prox(z)`` is optimal iff ``z - v = tau * v / ||v||`` for ``v != 0``
    and ``||z|| <= tau`` for ``v = 0``.
    """
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((groups, d)) * rng.uniform(0.1, 3.0, size=(groups, 1))
    tau = 1.0
    V = np.asarray(program.group_soft_threshold(Z.ravel(), tau, d)).reshape(groups, d)
    worst = 0.0
    for z, v in zip(Z, V):
        nv = np.linalg.norm(v)
        if nv > 0:
            worst = max(worst, float(np.linalg.norm(z - v - tau * v / nv)))
        else:
            worst = max(worst, max(0.0, float(np.linalg.norm(z)) - tau))
    return _check("prox_optimality", _desc(seed, groups=groups, d=d), worst, 0.0, 1e-10)


def check_pcg(seed: int = 0, rho: float = 0.1) -> OracleReport:
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((8, 3))
    prog = program.ConvexProgram(X, patterns.sample_patterns(X, 6, seed), rng.standard_normal(8), 0.1)
    v, lam = rng.standard_normal(prog.var_dim), rng.standard_normal(prog.var_dim)
    s, nu = rng.standard_normal(prog.slack_dim), rng.standard_normal(prog.slack_dim)
    rhs = (
        2.0 * program.apply_F_transpose(prog, prog.y)
        + rho * (v - lam)
        + rho * program.apply_G_transpose(prog, s - nu)
    )
    tol = 1e-10
    res = admm.pcg_solve(lambda x: program.apply_normal(prog, x, rho), rhs, prog.jacobi_diagonal(rho), tol=tol, max_iters=10 * prog.var_dim)
    ref = oracle.dense_quadratic_solve(prog, v, s, lam, nu, rho)
    A = oracle.normal_matrix(prog, rho)
    # the residual tolerance bounds the error by tol * max(1, |rhs|) / lambda_min
    bound = tol * max(1.0, float(np.linalg.norm(rhs))) / float(np.linalg.eigvalsh(A)[0])
    err = float(np.linalg.norm(res.x - ref))
    return _check("pcg_vs_dense", _desc(seed, prog, rho=rho), err, 0.0, bound, gap_based=False)


def check_admm(seed: int = 0, rho: float = 0.1) -> OracleReport:
    prog = small_instance(seed)
    sol = admm.solve(prog, admm.AdmmConfig(rho=rho, max_iters=100000, stop_tol=1e-8))
    ref = oracle.dense_objective(prog, oracle.projected_gradient_reference(prog))
    return _check("admm_vs_projected_gradient", _desc(seed, prog, rho=rho), sol.objective, ref, 1e-4)


def check_agd(seed: int = 0, N: int = 50, m: int = 8) -> OracleReport:
    rng = np.random.default_rng(seed)
    ds = finetune.Phase2Dataset(np.abs(rng.standard_normal((N, m))), np.where(rng.random(N) < 0.5, 1.0, -1.0))
    _, trace = finetune.agd_minimize(ds, 1.0, 0.5, iters=2000)
    _, loss_star, _, _ = oracle.gd_logistic_reference(ds.features, ds.labels, 1.0, 0.5)
    return _check("agd_vs_gradient_descent", _desc(seed, N=N, m=m), trace.loss[-1], loss_star, 1e-6)


def check_nonconvex(seed: int = 0) -> OracleReport:
    prog = small_instance(seed)
    sol = admm.solve(prog, admm.AdmmConfig(rho=0.1, max_iters=100000, stop_tol=1e-8))
    best = oracle.nonconvex_multistart(prog.X, prog.y, min(16, 2 * prog.P), prog.beta_reg, restarts=5, seed=seed)
    rep = OracleReport("nonconvex_lower_bound", _desc(seed, prog), best, sol.objective, 1e-3, False)
    rep.passed = bool(best >= sol.objective - 1e-3)
    return rep


def check_patterns(seed: int = 0, n: int = 8, d: int = 3) -> OracleReport:
    X = np.random.default_rng(seed).standard_normal((n, d))
    count = len(patterns.enumerate_patterns(X))
    return _check("pattern_count", _desc(seed, n=n, d=d), count, patterns.region_count_bound(n, d), 0.0, gap_based=False)


SUITES = {"standard"}


def run_battery(suite: str = "standard", seed: int = 0) -> list[OracleReport]:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}")
    reports = check_adjoints(seed)
    reports.append(check_prox(seed))
    reports.append(check_pcg(seed))
    reports.append(check_admm(seed))
    reports.append(check_agd(seed))
    reports.append(check_nonconvex(seed))
    reports.append(check_patterns(seed))
    return reports


def battery_document(reports, suite: str = "standard") -> dict:
    return {"suite": suite, "passed": all(r.passed for r in reports), "reports": [r.to_dict() for r in reports]}


def format_table(reports) -> str:
    rows = [("oracle", "value", "target", "gap", "result")]
    for r in reports:
        rows.append((r.oracle, f"{r.value:.6g}", f"{r.target:.6g}", f"{r.gap:.2e}", "PASS" if r.passed else "FAIL"))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows)
