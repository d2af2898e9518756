"""Slack-form convex program for a two-layer ReLU network.

The decision vector ``u`` has ``2 * P`` groups of length ``d``: groups
``0..P-1`` are the positive-part weights ``v_i`` and groups ``P..2P-1`` the
negative-part weights ``w_i``. The program is::

    min  ||F u - y||^2 + beta_reg * ||v||_{2,1} + indicator(s >= 0)
    s.t. u = v,  G u = s

with ``F u = sum_i D_i X (v_i - w_i)`` and ``G`` block-diagonal, applying
``(2 D_i - I) X`` to both groups of pattern ``i``. Neither operator is ever
materialized; everything goes through :mod:`cvxpref.kernels`.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import InputError
from .patterns import CONE_EPS, PatternSet, as_data_matrix


class ConvexProgram:
    """Immutable problem instance: data, patterns, targets and ``beta_reg``."""

    def __init__(self, X, patterns: PatternSet, y, beta_reg: float):
        X = as_data_matrix(X)
        y = np.ascontiguousarray(y, dtype=np.float64)
        if y.shape != (X.shape[0],):
            raise InputError(f"targets must have shape ({X.shape[0]},), got {y.shape}")
        if not np.all(np.isfinite(y)):
            raise InputError("targets contain non-finite entries")
        if patterns.n != X.shape[0] or patterns.d != X.shape[1]:
            raise InputError("pattern set was built for a different data matrix")
        if len(patterns) == 0:
            raise InputError("pattern set is empty")
        if beta_reg < 0:
            raise InputError("beta_reg must be nonnegative")

        self.X = X
        self.patterns = patterns
        self.y = y
        self.beta_reg = float(beta_reg)
        self.mask = np.ascontiguousarray(patterns.masks.T, dtype=np.float64)
        self.sign = 2.0 * self.mask - 1.0
        self.gram = X.T @ X
        for a in (self.X, self.y, self.mask, self.sign, self.gram):
            a.flags.writeable = False

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def P(self) -> int:
        return len(self.patterns)

    @property
    def var_dim(self) -> int:
        return 2 * self.d * self.P

    @property
    def slack_dim(self) -> int:
        return 2 * self.n * self.P

    def groups(self, u) -> np.ndarray:
        """View a flat group vector as a (2P, d) array."""
        u = np.ascontiguousarray(u, dtype=np.float64)
        if u.shape != (self.var_dim,):
            raise InputError(f"group vector must have length {self.var_dim}, got {u.shape}")
        return u.reshape(2 * self.P, self.d)

    def slack_blocks(self, s) -> np.ndarray:
        s = np.ascontiguousarray(s, dtype=np.float64)
        if s.shape != (self.slack_dim,):
            raise InputError(f"slack vector must have length {self.slack_dim}, got {s.shape}")
        return s.reshape(2 * self.P, self.n)

    def jacobi_diagonal(self, rho: float) -> np.ndarray:
        """Diagonal of ``2 F^T F + rho I + rho G^T G`` from column norms."""
        X2 = self.X * self.X
        half = 2.0 * (self.mask.T @ X2)
        diag = np.concatenate([half, half]) + rho + rho * X2.sum(axis=0)
        return diag.ravel()


def apply_F(prog: ConvexProgram, u) -> np.ndarray:
    return kernels.f_apply(prog.X, prog.mask, prog.groups(u))


def apply_F_transpose(prog: ConvexProgram, r) -> np.ndarray:
    r = np.ascontiguousarray(r, dtype=np.float64)
    if r.shape != (prog.n,):
        raise InputError(f"residual must have length {prog.n}, got {r.shape}")
    return kernels.f_adjoint(prog.X, prog.mask, r).ravel()


def apply_G(prog: ConvexProgram, u) -> np.ndarray:
    return np.ascontiguousarray(kernels.g_apply(prog.X, prog.sign, prog.groups(u))).ravel()


def apply_G_transpose(prog: ConvexProgram, s) -> np.ndarray:
    return kernels.g_adjoint(prog.X, prog.sign, prog.slack_blocks(s)).ravel()


def apply_normal(prog: ConvexProgram, u, rho: float) -> np.ndarray:
    """``(2 F^T F + rho I + rho G^T G) u``, the u-subproblem operator."""
    return kernels.normal_apply(prog.X, prog.mask, prog.gram, prog.groups(u), rho).ravel()


def group_norms(z, group_size: int) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.size % group_size:
        raise InputError(f"length {z.size} is not divisible by group size {group_size}")
    return np.linalg.norm(z.reshape(-1, group_size), axis=1)


def objective(prog: ConvexProgram, u, v, s) -> float:
    """``||F u - y||^2 + beta_reg * ||v||_{2,1}``, or ``inf`` if ``s`` has a
    negative entry beyond the cone tolerance."""
    s = np.asarray(s, dtype=np.float64)
    if s.size and s.min() < -CONE_EPS:
        return float("inf")
    r = apply_F(prog, u) - prog.y
    return float(r @ r + prog.beta_reg * group_norms(v, prog.d).sum())


def group_soft_threshold(z, tau: float, group_size: int | None = None) -> np.ndarray:
    """Proximal map of ``tau * ||.||_{2,1}``: shrink each group's norm by ``tau``.

    ``z`` is either a (groups, d) array or a flat vector with ``group_size``.
    The output has the same shape as ``z``.
    """
    if tau < 0:
        raise InputError("tau must be nonnegative")
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 2:
        return kernels.group_shrink(np.ascontiguousarray(z), float(tau))
    if group_size is None or z.size % group_size:
        raise InputError("flat input needs a group_size dividing its length")
    Z = np.ascontiguousarray(z.reshape(-1, group_size))
    return kernels.group_shrink(Z, float(tau)).ravel()
