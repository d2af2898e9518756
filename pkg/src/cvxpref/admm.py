"""ADMM for the slack-form convex program, with PCG for the u-subproblem.

One iteration::

    u <- argmin ||F u - y||^2 + rho/2 ||u - v + lam||^2 + rho/2 ||G u - s + nu||^2
    v <- group_soft_threshold(u + lam, beta_reg / rho)
    s <- max(G u + nu, 0)
    lam <- lam + (gamma_alpha / rho) (u - v)
    nu  <- nu  + (gamma_alpha / rho) (G u - s)

The loss carries no 1/2, so the u-step solves
``(2 F^T F + rho I + rho G^T G) u = 2 F^T y + rho (v - lam) + rho G^T (s - nu)``
inexactly, to a summable tolerance schedule ``delta_k = delta_0 / k**p``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import _kernels_py, kernels
from .errors import InputError, SolverError
from .patterns import CONE_EPS
from .program import ConvexProgram, group_norms

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("objective", "r_uv", "r_gs", "pcg_iters", "ergodic_residual", "certificate")


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 0.01
    gamma_alpha: float | None = None  # None -> rho, i.e. unit dual step
    max_iters: int = 1000
    pcg_tol0: float = 1e-3
    pcg_tol_power: float = 1.5
    pcg_max_iters: int | None = None  # None -> problem dimension
    stop_tol: float = 1e-6

    def __post_init__(self):
        if not self.rho > 0:
            raise InputError("rho must be positive")
        if self.gamma_alpha is not None and not self.gamma_alpha > 0:
            raise InputError("gamma_alpha must be positive")
        if self.max_iters < 1:
            raise InputError("max_iters must be >= 1")
        if not (self.pcg_tol0 > 0 and self.pcg_tol_power > 1):
            raise InputError("PCG tolerance schedule must be positive and summable (power > 1)")
        if self.stop_tol < 0:
            raise InputError("stop_tol must be nonnegative")

    @property
    def dual_step(self) -> float:
        ga = self.rho if self.gamma_alpha is None else self.gamma_alpha
        return ga / self.rho

    def pcg_tol(self, k: int) -> float:
        return self.pcg_tol0 / k**self.pcg_tol_power


class PcgResult(NamedTuple):
    x: np.ndarray
    iters: int
    residual_norm: float
    converged: bool


def pcg_solve(
    op: Callable[[np.ndarray], np.ndarray],
    rhs,
    precond=None,
    tol: float = 1e-10,
    max_iters: int | None = None,
    x0=None,
) -> PcgResult:
    """Preconditioned conjugate gradient for a symmetric positive-definite ``op``.

    ``precond`` is the diagonal of a Jacobi preconditioner (an approximation
    of ``op``'s diagonal) or ``None``. Stops once
    ``||op(x) - rhs|| <= tol * max(1, ||rhs||)``; otherwise returns the best
    iterate seen with ``converged=False``. Raises :class:`SolverError` on
    nonpositive curvature.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    if not tol > 0:
        raise InputError("tol must be positive")
    if max_iters is None:
        max_iters = rhs.size
    inv_diag = None if precond is None else 1.0 / np.asarray(precond, dtype=np.float64)
    threshold = tol * max(1.0, float(np.linalg.norm(rhs)))
    x0 = np.zeros_like(rhs) if x0 is None else x0
    x, it, rnorm, status = _kernels_py.pcg(op, rhs, inv_diag, threshold, max_iters, x0)
    if status == 2:
        raise SolverError(f"PCG breakdown: nonpositive curvature at iteration {it}")
    return PcgResult(x, it, rnorm, status == 0)


@dataclass
class AdmmState:
    """Mutable iterates of one solve, all stored as (groups, length) blocks."""

    U: np.ndarray
    V: np.ndarray
    S: np.ndarray
    Lam: np.ndarray
    Nu: np.ndarray
    U_sum: np.ndarray
    V_sum: np.ndarray
    S_sum: np.ndarray
    k: int = 0

    @classmethod
    def zeros(cls, prog: ConvexProgram) -> "AdmmState":
        G, d, n = 2 * prog.P, prog.d, prog.n
        return cls(
            U=np.zeros((G, d)),
            V=np.zeros((G, d)),
            S=np.zeros((G, n)),
            Lam=np.zeros((G, d)),
            Nu=np.zeros((G, n)),
            U_sum=np.zeros((G, d)),
            V_sum=np.zeros((G, d)),
            S_sum=np.zeros((G, n)),
        )

    def ergodic(self):
        if self.k == 0:
            return self.U_sum.copy(), self.V_sum.copy(), self.S_sum.copy()
        return self.U_sum / self.k, self.V_sum / self.k, self.S_sum / self.k


def residuals(prog: ConvexProgram, state: AdmmState, ergodic: bool = False) -> tuple[float, float]:
    """``(||u - v||, ||G u - s||)`` at the last iterate or the ergodic average."""
    U, V, S = state.ergodic() if ergodic else (state.U, state.V, state.S)
    r_uv = float(np.linalg.norm(U - V))
    r_gs = float(np.linalg.norm(kernels.g_apply(prog.X, prog.sign, U) - S))
    return r_uv, r_gs


def certificate_objective(prog: ConvexProgram, v) -> float:
    """Objective at the feasibility-corrected point ``(v, v, max(G v, 0))``.

    The cone indicator is checked on ``G v`` itself, so the value is ``inf``
    unless ``v`` is cone-feasible to within the cone tolerance.
    """
    Vb = prog.groups(v)
    gv = kernels.g_apply(prog.X, prog.sign, Vb)
    if gv.size and gv.min() < -CONE_EPS:
        return float("inf")
    r = kernels.f_apply(prog.X, prog.mask, Vb) - prog.y
    return float(r @ r + prog.beta_reg * group_norms(Vb, prog.d).sum())


@dataclass(frozen=True, eq=False)
class AdmmSolution:
    u: np.ndarray
    v: np.ndarray
    s: np.ndarray
    u_ergodic: np.ndarray
    v_ergodic: np.ndarray
    s_ergodic: np.ndarray
    lam: np.ndarray
    nu: np.ndarray
    trace: dict = field(repr=False)
    iterations: int
    converged: bool

    @property
    def objective(self) -> float:
        return float(self.trace["objective"][-1])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("iter",) + TRACE_COLUMNS)
            for i in range(self.iterations):
                row = [i + 1]
                for c in TRACE_COLUMNS:
                    val = self.trace[c][i]
                    row.append(int(val) if c == "pcg_iters" else repr(float(val)))
                w.writerow(row)


def solve(prog: ConvexProgram, cfg: AdmmConfig | None = None, track_certificate: bool = False) -> AdmmSolution:
    """Run ADMM from the all-zero state until converged or ``cfg.max_iters``.

    Converged means both primal residuals ``||u - v||``, ``||G u - s||`` and
    the change in ``(v, s)`` over the last iteration are all ``<= stop_tol``.
    """
    cfg = cfg or AdmmConfig()
    rho, step = cfg.rho, cfg.dual_step
    X, mask, sign, gram = prog.X, prog.mask, prog.sign, prog.gram
    tau = prog.beta_reg / rho
    pcg_max = cfg.pcg_max_iters or prog.var_dim
    shape = (2 * prog.P, prog.d)

    st = AdmmState.zeros(prog)
    Fty2 = 2.0 * kernels.f_adjoint(X, mask, prog.y)
    inv_diag = 1.0 / prog.jacobi_diagonal(rho).reshape(shape)

    trace = {c: [] for c in TRACE_COLUMNS}
    converged = False
    for k in range(1, cfg.max_iters + 1):
        rhs = Fty2 + rho * (st.V - st.Lam) + rho * kernels.g_adjoint(X, sign, st.S - st.Nu)
        threshold = cfg.pcg_tol(k) * max(1.0, float(np.linalg.norm(rhs)))
        U, pcg_iters, _, status = kernels.normal_pcg(X, mask, gram, rho, rhs, st.U, inv_diag, threshold, pcg_max)
        if status == 2:
            raise SolverError(f"PCG breakdown in the u-update at ADMM iteration {k}")
        GU = kernels.g_apply(X, sign, U)
        V = kernels.group_shrink(U + st.Lam, tau)
        S = np.maximum(GU + st.Nu, 0.0)
        st.Lam = st.Lam + step * (U - V)
        st.Nu = st.Nu + step * (GU - S)
        change = max(float(np.linalg.norm(V - st.V)), float(np.linalg.norm(S - st.S)))
        st.U, st.V, st.S, st.k = U, V, S, k
        st.U_sum += U
        st.V_sum += V
        st.S_sum += S

        r_uv = float(np.linalg.norm(U - V))
        r_gs = float(np.linalg.norm(GU - S))
        resid = kernels.f_apply(X, mask, U) - prog.y
        obj = float(resid @ resid + prog.beta_reg * np.linalg.norm(V, axis=1).sum())
        Ub, Vb, Sb = st.ergodic()
        erg = float(np.sqrt(np.sum((Ub - Vb) ** 2) + np.sum((kernels.g_apply(X, sign, Ub) - Sb) ** 2)))
        trace["objective"].append(obj)
        trace["r_uv"].append(r_uv)
        trace["r_gs"].append(r_gs)
        trace["pcg_iters"].append(pcg_iters)
        trace["ergodic_residual"].append(erg)
        trace["certificate"].append(certificate_objective(prog, Vb.ravel()) if track_certificate else np.nan)

        if not (np.isfinite(obj) and np.isfinite(r_uv) and np.isfinite(r_gs)):
            raise SolverError(f"non-finite iterate at ADMM iteration {k}")
        if max(r_uv, r_gs, change) <= cfg.stop_tol:
            converged = True
            break

    log.debug("ADMM stopped after %d iterations (converged=%s)", st.k, converged)
    Ub, Vb, Sb = st.ergodic()
    return AdmmSolution(
        u=st.U.ravel(),
        v=st.V.ravel(),
        s=st.S.ravel(),
        u_ergodic=Ub.ravel(),
        v_ergodic=Vb.ravel(),
        s_ergodic=Sb.ravel(),
        lam=st.Lam.ravel(),
        nu=st.Nu.ravel(),
        trace={c: np.asarray(vals) for c, vals in trace.items()},
        iterations=st.k,
        converged=converged,
    )
