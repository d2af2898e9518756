"""Slow reference solvers that certify the fast paths.

Nothing here calls :mod:`cvxpref.kernels` or the production solvers: the
operators are materialized densely from the raw data and patterns, and every
solver is written out independently. Instances must be small.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg

from .errors import InputError, SolverError

ORACLE_CONE_TOL = 1e-9


@dataclass
class OracleReport:
    oracle: str
    instance: dict
    value: float
    target: float
    tolerance: float
    passed: bool
    gap: float = float("nan")

    def __post_init__(self):
        self.gap = relative_gap(self.value, self.target)

    def to_dict(self) -> dict:
        doc = asdict(self)
        for key in ("value", "target", "gap", "tolerance"):
            doc[key] = _json_float(doc[key])
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _json_float(x: float):
    x = float(x)
    return x if np.isfinite(x) else str(x)


def relative_gap(a: float, b: float) -> float:
    if not (np.isfinite(a) and np.isfinite(b)):
        return 0.0 if a == b else float("inf")
    return abs(a - b) / max(1.0, abs(b))


# -- dense operators ---------------------------------------------------------


def _blocks(prog):
    X = np.array(prog.X, dtype=np.float64)
    masks = np.array(prog.patterns.masks, dtype=np.float64)  # (P, n)
    return X, masks


def dense_F(prog) -> np.ndarray:
    """Materialize ``F`` (n x 2dP): ``[D_1 X, ..., D_P X, -D_1 X, ..., -D_P X]``."""
    X, masks = _blocks(prog)
    P = masks.shape[0]
    pos = [masks[i][:, None] * X for i in range(P)]
    return np.hstack(pos + [-b for b in pos])


def dense_G(prog) -> np.ndarray:
    """Materialize ``G`` (2nP x 2dP), block-diagonal with ``(2 D_i - I) X`` twice."""
    X, masks = _blocks(prog)
    blocks = [(2.0 * m - 1.0)[:, None] * X for m in masks]
    return scipy.linalg.block_diag(*(blocks + blocks))


def dense_objective(prog, u) -> float:
    """Objective of the constrained group-lasso program at ``u`` (inf if infeasible)."""
    F, G = dense_F(prog), dense_G(prog)
    u = np.asarray(u, dtype=np.float64)
    if np.min(G @ u, initial=0.0) < -ORACLE_CONE_TOL:
        return float("inf")
    r = F @ u - prog.y
    groups = u.reshape(-1, prog.X.shape[1])
    return float(np.sum(r**2) + prog.beta_reg * np.sum(np.sqrt(np.sum(groups**2, axis=1))))


# -- cone projection and the constrained prox --------------------------------


def halfspace_project(z, a):
    """Project ``z`` onto ``{x : a . x >= 0}``."""
    z = np.asarray(z, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    t = a @ z
    if t >= 0:
        return z.copy()
    return z - (t / (a @ a)) * a


def face_projectors(A, tol: float = 1e-12) -> np.ndarray:
    """Orthogonal projectors onto ``null(A_S)`` for every row subset ``S`` with ``|S| <= d``.

    The projection of a point onto ``{x : A x >= 0}`` lies in the relative
    interior of some face, and that face spans ``null(A_S)`` for an active
    subset of at most ``d`` rows, so these projectors contain the answer.
    """
    A = np.asarray(A, dtype=np.float64)
    n, d = A.shape
    mats = [np.eye(d)]
    for size in range(1, min(n, d) + 1):
        for rows in itertools.combinations(range(n), size):
            B = A[list(rows)]
            _, sv, vt = np.linalg.svd(B)
            rank = int(np.sum(sv > tol * max(1.0, sv[0])))
            null = vt[rank:]
            mats.append(null.T @ null)
    return np.array(mats)


def project_cones(Z, A, projectors=None, tol: float = ORACLE_CONE_TOL):
    """Exact projection of each row ``Z[g]`` onto ``{x : A[g] x >= 0}``.

    ``Z`` is (G, d) and ``A`` is (G, n, d). Every face candidate is formed
    and the nearest feasible one is kept; the cost is exponential in ``d``,
    so this is only meant for tiny instances.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if projectors is None:
        projectors = np.array([face_projectors(a) for a in A])
    cand = (projectors @ Z[:, None, :, None])[..., 0]  # (G, C, d)
    slack = (cand @ A.transpose(0, 2, 1)).min(axis=2)
    scale = 1.0 + np.linalg.norm(cand, axis=2)
    dist = np.sum((cand - Z[:, None, :]) ** 2, axis=2)
    dist[slack < -tol * scale] = np.inf
    pick = np.argmin(dist, axis=1)
    return cand[np.arange(Z.shape[0]), pick]


def dykstra_project_cones(Z, A, sweeps: int = 200, tol: float = 1e-10):
    """Dykstra's alternating halfspace projections of each row ``Z[g]`` onto ``{x : A[g] x >= 0}``.

    Slower and less exact than :func:`project_cones` near cone vertices, but
    it does not depend on enumerating faces. All groups are swept together.
    """
    G, n, d = A.shape
    x = np.array(Z, dtype=np.float64)
    incr = np.zeros((n, G, d))
    norms2 = np.einsum("gjk,gjk->gj", A, A)
    safe = np.where(norms2 > 0, norms2, 1.0)
    for _ in range(sweeps):
        x_start = x.copy()
        for j in range(n):
            a = A[:, j, :]
            yv = x + incr[j]
            t = np.einsum("gk,gk->g", a, yv)
            coef = np.where((t < 0) & (norms2[:, j] > 0), t / safe[:, j], 0.0)
            x = yv - coef[:, None] * a
            incr[j] = yv - x
        if np.max(np.abs(x - x_start), initial=0.0) <= tol:
            break
    return x


def _cone_prox(Z, A, tau, projectors):
    # prox of tau*||.|| + indicator(cone) = shrink(project(z))
    if projectors is None:
        Pz = dykstra_project_cones(Z, A)
    else:
        Pz = project_cones(Z, A, projectors)
    nrm = np.sqrt(np.sum(Pz**2, axis=1))
    scale = np.where(nrm > tau, 1.0 - tau / np.where(nrm > 0, nrm, 1.0), 0.0)
    return Pz * scale[:, None]


def projected_gradient_reference(
    prog,
    iters: int = 200000,
    step: float | None = None,
    tol: float = 1e-10,
    projection: str = "exact",
) -> np.ndarray:
    """Accelerated proximal gradient on the constrained group-lasso program.

    The prox of each group is the projection onto its cone followed by norm
    shrinkage; ``projection`` selects exact face enumeration (``"exact"``)
    or Dykstra sweeps (``"dykstra"``). Momentum restarts whenever the objective increases;
    the best iterate by objective is returned. Stops once an iteration moves
    the iterate by at most ``tol * max(1, ||x||)``. A diverging step is
    halved and the run restarted, at most 10 times.
    """
    F = dense_F(prog)
    d = prog.X.shape[1]
    if F.shape[1] > 200:
        raise InputError("projected_gradient_reference is limited to 2dP <= 200")
    if projection not in ("exact", "dykstra"):
        raise InputError(f"unknown projection {projection!r}")
    X, masks = _blocks(prog)
    signs = 2.0 * masks - 1.0
    A_half = signs[:, :, None] * X[None, :, :]
    A = np.concatenate([A_half, A_half])
    projectors = None
    if projection == "exact":
        proj_half = np.array([face_projectors(a) for a in A_half])
        projectors = np.concatenate([proj_half, proj_half])
    y, beta = np.asarray(prog.y, dtype=np.float64), prog.beta_reg

    def f_val(u):
        r = F @ u - y
        return float(r @ r + beta * np.sum(np.sqrt(np.sum(u.reshape(-1, d) ** 2, axis=1))))

    lip = 2.0 * np.linalg.norm(F, 2) ** 2
    step = 1.0 / max(lip, 1e-12) if step is None else step
    for _ in range(11):
        x = np.zeros(F.shape[1])
        best_u, best_obj = x.copy(), f_val(x)
        first_obj = best_obj
        yk, tk, prev_obj = x.copy(), 1.0, best_obj
        diverged = False
        for _ in range(iters):
            grad = 2.0 * F.T @ (F @ yk - y)
            Z = (yk - step * grad).reshape(-1, d)
            x_new = _cone_prox(Z, A, step * beta, projectors).ravel()
            obj = f_val(x_new)
            if not np.isfinite(obj) or obj > 1e6 * (first_obj + 1.0):
                diverged = True
                break
            if obj < best_obj:
                best_u, best_obj = x_new.copy(), obj
            if obj > prev_obj:
                tk, yk = 1.0, x_new.copy()
            else:
                t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
                yk = x_new + ((tk - 1.0) / t_new) * (x_new - x)
                tk = t_new
            moved = np.linalg.norm(x_new - x)
            x, prev_obj = x_new, obj
            if moved <= tol * max(1.0, np.linalg.norm(x)):
                break
        if not diverged:
            return best_u
        step *= 0.5
    raise SolverError("projected gradient reference diverged after 10 step halvings")


# -- u-subproblem -------------------------------------------------------------


def dense_quadratic_solve(prog, v, s, lam, nu, rho: float) -> np.ndarray:
    """Solve the u-step normal equations by dense Cholesky factorization."""
    F, G = dense_F(prog), dense_G(prog)
    if F.shape[1] > 500:
        raise InputError("dense_quadratic_solve is limited to 2dP <= 500")
    A = 2.0 * F.T @ F + rho * np.eye(F.shape[1]) + rho * G.T @ G
    rhs = 2.0 * F.T @ prog.y + rho * (np.asarray(v) - lam) + rho * G.T @ (np.asarray(s) - nu)
    try:
        factor = scipy.linalg.cho_factor(A)
    except np.linalg.LinAlgError as exc:
        raise SolverError("u-step matrix is not positive definite") from exc
    return scipy.linalg.cho_solve(factor, rhs)


def normal_matrix(prog, rho: float) -> np.ndarray:
    F, G = dense_F(prog), dense_G(prog)
    return 2.0 * F.T @ F + rho * np.eye(F.shape[1]) + rho * G.T @ G


# -- logistic fine-tuning reference ------------------------------------------


def _logistic(A, labels, theta, beta, gamma):
    z = -beta * labels * (A @ theta) + gamma
    loss = float(np.mean(np.logaddexp(0.0, z)))
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))
    grad = A.T @ (-beta * labels * sig) / A.shape[0]
    return loss, grad


def gd_logistic_reference(
    features,
    labels,
    beta_reward: float,
    gamma: float,
    iters: int = 10**6,
    grad_tol: float = 1e-11,
    theta0=None,
):
    """Plain gradient descent with step ``1/L`` (L from a dense SVD).

    Stops early once the gradient norm drops below ``grad_tol``. Returns
    ``(theta, loss, grad_norm, iterations)``.
    """
    A = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    N, m = A.shape
    theta = np.zeros(m) if theta0 is None else np.array(theta0, dtype=np.float64)
    smax = np.linalg.svd(A, compute_uv=False)[0] if min(N, m) else 0.0
    L = beta_reward**2 * smax**2 / (4.0 * N)
    loss, grad = _logistic(A, labels, theta, beta_reward, gamma)
    if L == 0:
        return theta, loss, float(np.linalg.norm(grad)), 0
    it = 0
    while it < iters:
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= grad_tol:
            break
        theta = theta - grad / L
        loss, grad = _logistic(A, labels, theta, beta_reward, gamma)
        it += 1
    return theta, loss, float(np.linalg.norm(grad)), it


# -- non-convex two-layer network ---------------------------------------------


def nonconvex_objective(X, y, theta1, theta2, beta_reg: float) -> float:
    H = np.maximum(X @ theta1.T, 0.0)
    r = H @ theta2 - y
    return float(r @ r + 0.5 * beta_reg * (np.sum(theta1**2) + np.sum(theta2**2)))


def nonconvex_multistart(
    X,
    y,
    m: int,
    beta_reg: float,
    restarts: int = 10,
    iters: int = 3000,
    seed: int = 0,
) -> float:
    """Best objective of the weight-decay two-layer ReLU problem over random restarts.

    Each restart runs gradient descent with Armijo backtracking; the ReLU
    derivative at 0 is taken as 0.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    if n > 8 or d > 2 or m > 16:
        raise InputError("nonconvex_multistart is limited to n <= 8, d <= 2, m <= 16")
    if m == 0:
        return float(y @ y)

    def value_grad(T1, t2):
        Hpre = X @ T1.T
        H = np.maximum(Hpre, 0.0)
        r = H @ t2 - y
        val = float(r @ r + 0.5 * beta_reg * (np.sum(T1**2) + np.sum(t2**2)))
        g2 = 2.0 * H.T @ r + beta_reg * t2
        dH = 2.0 * np.outer(r, t2) * (Hpre > 0)
        g1 = dH.T @ X + beta_reg * T1
        return val, g1, g2

    rng = np.random.default_rng(seed)
    best = float(y @ y)
    for _ in range(restarts):
        T1 = rng.standard_normal((m, d))
        t2 = rng.standard_normal(m) / np.sqrt(m)
        val, g1, g2 = value_grad(T1, t2)
        lr = 1.0
        for _ in range(iters):
            gsq = float(np.sum(g1**2) + np.sum(g2**2))
            if gsq <= 1e-24:
                break
            lr *= 2.0
            while True:
                T1n, t2n = T1 - lr * g1, t2 - lr * g2
                val_n, g1n, g2n = value_grad(T1n, t2n)
                if val_n <= val - 0.5 * lr * gsq or lr < 1e-16:
                    break
                lr *= 0.5
            if val_n > val:
                break
            T1, t2, val, g1, g2 = T1n, t2n, val_n, g1n, g2n
        best = min(best, val)
    return best


# -- hyperplane arrangements ---------------------------------------------------


def arrangement_region_count(X, tol: float = 1e-10) -> int:
    """Regions of the central arrangement ``{x : X_j . x = 0}`` by Zaslavsky's theorem.

    Sums ``(-1)^(|S| - rank S)`` over all row subsets ``S``, so the cost is
    ``2^n`` rank computations. Limited to ``n <= 16``.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n > 16:
        raise InputError("arrangement_region_count is limited to n <= 16")
    total = 0
    for size in range(n + 1):
        for rows in itertools.combinations(range(n), size):
            rank = np.linalg.matrix_rank(X[list(rows)], tol=tol) if rows else 0
            total += (-1) ** (size - rank)
    return total


def angular_sector_masks(X) -> set[str]:
    """Distinct masks ``1(X v >= 0)`` of a 2-column ``X``, one probe per angular sector.

    Each row vanishes on two antipodal directions; probing the midpoint of
    every sector between consecutive boundary angles visits every open region.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 2:
        raise InputError("angular_sector_masks needs a 2-column matrix")
    base = np.arctan2(X[:, 1], X[:, 0]) + np.pi / 2
    angles = np.sort(np.mod(np.concatenate([base, base + np.pi]), 2 * np.pi))
    nxt = np.append(angles[1:], angles[0] + 2 * np.pi)
    masks = set()
    for a, b in zip(angles, nxt):
        if b - a <= 1e-12:
            continue
        mid = 0.5 * (a + b)
        v = np.array([np.cos(mid), np.sin(mid)])
        masks.add("".join("1" if t >= 0 else "0" for t in X @ v))
    return masks
