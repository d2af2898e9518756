"""Pure numpy implementations of the hot kernels.

Shapes used throughout:

- ``X``: (n, d) data matrix
- ``mask``: (n, P) float array of 0/1 activation patterns
- ``sign``: (n, P) float array, ``2 * mask - 1``
- ``U``: (2P, d) stacked groups; rows ``0..P-1`` are the v-groups and
  rows ``P..2P-1`` the w-groups
- ``S``: (2P, n) slack blocks, one per group
"""

import numpy as np

name = "python"


def f_apply(X, mask, U):
    P = mask.shape[1]
    Z = X @ (U[:P] - U[P:]).T
    return np.einsum("ij,ij->i", Z, mask)


def f_adjoint(X, mask, r):
    V = (mask * r[:, None]).T @ X
    return np.concatenate([V, -V])


def g_apply(X, sign, U):
    P = sign.shape[1]
    Z = (X @ U.T).T
    Z[:P] *= sign.T
    Z[P:] *= sign.T
    return Z


def g_adjoint(X, sign, S):
    P = sign.shape[1]
    W = np.empty_like(S)
    W[:P] = S[:P] * sign.T
    W[P:] = S[P:] * sign.T
    return W @ X


def normal_apply(X, mask, gram, U, rho):
    """``(2 F^T F + rho I + rho G^T G) U``; uses ``G^T G = blockdiag(X^T X)``."""
    out = 2.0 * f_adjoint(X, mask, f_apply(X, mask, U))
    out += rho * U
    out += rho * (U @ gram)
    return out


def group_shrink(Z, tau):
    norms = np.sqrt(np.einsum("ij,ij->i", Z, Z))
    scale = np.zeros_like(norms)
    keep = norms > tau
    scale[keep] = 1.0 - tau / norms[keep]
    return Z * scale[:, None]


def logistic_loss_grad(A, labels, theta, beta, gamma):
    """Mean of ``log(1 + exp(-beta*y*<theta, a> + gamma))`` and its gradient."""
    N = A.shape[0]
    z = -beta * labels * (A @ theta) + gamma
    loss = np.logaddexp(0.0, z).sum() / N
    w = -beta * labels * _sigmoid(z)
    grad = (A.T @ w) / N
    return loss, grad


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def pcg(op, rhs, inv_diag, threshold, max_iters, x0):
    """Jacobi-preconditioned CG on flat vectors.

    Returns ``(x, iters, residual_norm, status)`` with status 0 = converged,
    1 = iteration cap (``x`` is then the best iterate), 2 = nonpositive
    curvature. ``inv_diag`` may be ``None``.
    """
    x = np.array(x0, dtype=np.float64)
    r = rhs - op(x)
    rnorm = float(np.linalg.norm(r))
    if rnorm <= threshold:
        return x, 0, rnorm, 0
    best_x, best_r = x.copy(), rnorm
    z = r if inv_diag is None else r * inv_diag
    p = z.copy()
    rz = float(r @ z)
    it = 0
    while it < max_iters:
        Ap = op(p)
        curv = float(p @ Ap)
        if not curv > 0:
            return x, it, rnorm, 2
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        it += 1
        rnorm = float(np.linalg.norm(r))
        if rnorm <= threshold:
            # recurrences drift; confirm against the true residual
            r = rhs - op(x)
            rnorm = float(np.linalg.norm(r))
            if rnorm <= threshold:
                return x, it, rnorm, 0
        if rnorm < best_r:
            best_x, best_r = x.copy(), rnorm
        z = r if inv_diag is None else r * inv_diag
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return best_x, it, best_r, 1


def normal_pcg(X, mask, gram, rho, rhs, x0, inv_diag, threshold, max_iters):
    """PCG on ``normal_apply``; arrays are (2P, d) blocks."""
    shape = rhs.shape

    def op(x):
        return normal_apply(X, mask, gram, x.reshape(shape), rho).ravel()

    x, it, rn, status = pcg(op, rhs.ravel(), inv_diag.ravel(), threshold, max_iters, x0.ravel())
    return x.reshape(shape), it, rn, status
