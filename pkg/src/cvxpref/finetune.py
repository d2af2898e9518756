"""Phase II: fit the output weights on pairwise preference data.

With the first layer frozen, each sample contributes
``log(1 + exp(-beta_reward * label * <theta2, h> + gamma))`` where ``h`` is the
post-ReLU hidden vector, so the problem is a convex logistic regression in
``theta2``. Accelerated gradient descent with step ``1/L`` reaches
``f(x_k) - f* <= 2 L ||x_0 - x*||^2 / (k + 1)^2``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InputError, SolverError
from .recovery import TwoLayerNet, load_network, network_files, save_network

DEFAULT_BETA_REWARD = 1.0
DEFAULT_GAMMA = 0.5


@dataclass(frozen=True, eq=False)
class Phase2Dataset:
    """Hidden activations (N, m) and +1 (chosen) / -1 (rejected) labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        A = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.float64).reshape(-1)
        if A.ndim != 2:
            raise InputError(f"features must be 2-D, got shape {A.shape}")
        if y.shape[0] != A.shape[0]:
            raise InputError(f"{y.shape[0]} labels for {A.shape[0]} rows")
        if not np.all(np.isfinite(A)):
            raise InputError("features contain non-finite values")
        if np.any(A < 0):
            raise InputError("hidden activations must be nonnegative")
        if not np.all(np.abs(y) == 1):
            raise InputError("labels must be +1 or -1")
        A.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", A)
        object.__setattr__(self, "labels", y)

    @property
    def N(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class CoalaHead:
    net: TwoLayerNet
    beta_reward: float = DEFAULT_BETA_REWARD
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if not self.beta_reward > 0:
            raise InputError("beta_reward must be positive")
        if not self.gamma >= 0:
            raise InputError("gamma must be nonnegative")

    def score(self, X) -> np.ndarray:
        return self.net.forward_batch(X)


def build_phase2_features(net: TwoLayerNet, raw) -> np.ndarray:
    """``max(raw @ theta1.T, 0)``: one hidden vector per raw row."""
    values = raw.values if hasattr(raw, "values") else raw
    return net.hidden(values)


def _checked(theta2, ds: Phase2Dataset) -> np.ndarray:
    theta2 = np.ascontiguousarray(theta2, dtype=np.float64)
    if theta2.shape != (ds.m,):
        raise InputError(f"theta2 must have length {ds.m}, got {theta2.shape}")
    if ds.N == 0:
        raise InputError("dataset is empty")
    return theta2


def coala_loss_and_grad(theta2, ds: Phase2Dataset, beta_reward: float, gamma: float):
    theta2 = _checked(theta2, ds)
    loss, grad = kernels.logistic_loss_grad(ds.features, ds.labels, theta2, float(beta_reward), float(gamma))
    return float(loss), np.asarray(grad)


def coala_loss(theta2, ds: Phase2Dataset, beta_reward: float, gamma: float) -> float:
    return coala_loss_and_grad(theta2, ds, beta_reward, gamma)[0]


def coala_grad(theta2, ds: Phase2Dataset, beta_reward: float, gamma: float) -> np.ndarray:
    return coala_loss_and_grad(theta2, ds, beta_reward, gamma)[1]


def spectral_norm(A, tol: float = 1e-6, max_iters: int = 500, seed: int = 0) -> float:
    """Largest singular value of ``A`` by power iteration on ``A^T A``.

    Stops when the estimate changes by at most ``tol`` relative.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.size == 0:
        return 0.0
    x = np.random.default_rng(seed).standard_normal(A.shape[1])
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(max_iters):
        w = A.T @ (A @ x)
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            return 0.0
        x = w / nrm
        new = float(np.linalg.norm(A @ x))
        if abs(new - sigma) <= tol * new:
            return new
        sigma = new
    return sigma


def estimate_lipschitz(ds: Phase2Dataset, beta_reward: float) -> float:
    """``beta_reward^2 * sigma_max(features)^2 / (4 N)``, a bound on the gradient's Lipschitz constant."""
    if ds.N == 0:
        raise InputError("dataset is empty")
    sigma = spectral_norm(ds.features)
    return beta_reward**2 * sigma**2 / (4.0 * ds.N)


@dataclass
class AgdTrace:
    """Loss and gradient norm at each iterate ``x_0 .. x_K`` (K + 1 entries)."""

    loss: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    step: float = 0.0

    def record(self, loss: float, grad) -> None:
        if not np.isfinite(loss):
            raise SolverError(f"non-finite loss at iteration {len(self.loss)}")
        self.loss.append(float(loss))
        self.grad_norm.append(float(np.linalg.norm(grad)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("iter", "loss", "grad_norm"))
            for k, (f, g) in enumerate(zip(self.loss, self.grad_norm)):
                w.writerow((k, repr(f), repr(g)))


def agd_minimize(ds: Phase2Dataset, beta_reward: float, gamma: float, theta0=None, iters: int = 500):
    """Nesterov accelerated gradient with step ``1/L``; returns ``(theta2, trace)``.

    The trace records the plain (non-extrapolated) iterates. ``iters = 0``
    returns ``theta0`` unchanged.
    """
    if iters < 0:
        raise InputError("iters must be nonnegative")
    x = np.zeros(ds.m) if theta0 is None else _checked(theta0, ds).copy()
    loss, grad = coala_loss_and_grad(x, ds, beta_reward, gamma)
    trace = AgdTrace()
    trace.record(loss, grad)
    L = estimate_lipschitz(ds, beta_reward)
    if L == 0.0:
        # features are all zero: the loss is constant
        for _ in range(iters):
            trace.record(loss, grad)
        return x, trace
    trace.step = 1.0 / L
    y, t = x.copy(), 1.0
    for _ in range(iters):
        _, gy = coala_loss_and_grad(y, ds, beta_reward, gamma)
        x_new = y - gy / L
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        loss, grad = coala_loss_and_grad(x, ds, beta_reward, gamma)
        trace.record(loss, grad)
    return x, trace


def adam_minimize(
    ds: Phase2Dataset,
    beta_reward: float,
    gamma: float,
    theta0=None,
    iters: int = 500,
    lr: float = 1e-2,
    betas: tuple = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
):
    """Full-batch adaptive-moment descent with decoupled weight decay.

    Same signature and trace as :func:`agd_minimize`; carries no rate
    guarantee.
    """
    if iters < 0:
        raise InputError("iters must be nonnegative")
    x = np.zeros(ds.m) if theta0 is None else _checked(theta0, ds).copy()
    b1, b2 = betas
    mom, vel = np.zeros_like(x), np.zeros_like(x)
    loss, grad = coala_loss_and_grad(x, ds, beta_reward, gamma)
    trace = AgdTrace(step=lr)
    trace.record(loss, grad)
    for k in range(1, iters + 1):
        mom = b1 * mom + (1 - b1) * grad
        vel = b2 * vel + (1 - b2) * grad * grad
        mhat = mom / (1 - b1**k)
        vhat = vel / (1 - b2**k)
        x = x - lr * (mhat / (np.sqrt(vhat) + eps) + weight_decay * x)
        loss, grad = coala_loss_and_grad(x, ds, beta_reward, gamma)
        trace.record(loss, grad)
    return x, trace


def save_head(head: CoalaHead, manifest_path) -> Path:
    manifest_path = Path(manifest_path)
    stem = manifest_path.name[: -len(".json")] if manifest_path.name.endswith(".json") else manifest_path.name
    net_manifest = save_network(head.net, manifest_path.parent / (stem + ".net.json"))
    doc = {
        "m": head.net.m,
        "beta_reward": float(head.beta_reward),
        "gamma": float(head.gamma),
        "net": net_manifest.name,
    }
    manifest_path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return manifest_path


def load_head(manifest_path) -> CoalaHead:
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read head manifest {manifest_path}: {exc}") from exc
    if "net" not in doc:
        # a bare network manifest is accepted with default hyperparameters
        return CoalaHead(load_network(manifest_path))
    net = load_network(manifest_path.parent / doc["net"])
    return CoalaHead(net, doc.get("beta_reward", DEFAULT_BETA_REWARD), doc.get("gamma", DEFAULT_GAMMA))


def head_files(manifest_path) -> list[str]:
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    return [str(manifest_path)] + network_files(manifest_path.parent / doc["net"])
