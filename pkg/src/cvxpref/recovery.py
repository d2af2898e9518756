"""Two-layer ReLU network recovered from a convex solution.

Each nonzero group ``g`` of the solution becomes one neuron with first-layer
row ``g / sqrt(||g||)`` and output weight ``+sqrt(||g||)`` (v-groups) or
``-sqrt(||g||)`` (w-groups). This split has the smallest weight decay among
all factorizations of ``g``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import features
from .errors import InputError
from .patterns import CONE_EPS, PatternSet

DEFAULT_PRUNE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class TwoLayerNet:
    """``f(x) = sum_j max(theta1[j] . x, 0) * theta2[j]``.

    ``origin[j]`` is ``(pattern index, +1 or -1)``: the pattern whose group
    produced neuron ``j`` and whether it came from a v-group (+1) or a
    w-group (-1). Nets not produced by recovery may use an empty origin.
    """

    theta1: np.ndarray
    theta2: np.ndarray
    origin: tuple = ()

    def __post_init__(self):
        t1 = np.array(self.theta1, dtype=np.float64, copy=True)
        t2 = np.array(self.theta2, dtype=np.float64, copy=True).reshape(-1)
        if t1.ndim != 2:
            raise InputError(f"theta1 must be 2-D, got shape {t1.shape}")
        if t2.shape[0] != t1.shape[0]:
            raise InputError(f"theta2 has {t2.shape[0]} entries for {t1.shape[0]} neurons")
        if not (np.all(np.isfinite(t1)) and np.all(np.isfinite(t2))):
            raise InputError("network weights must be finite")
        origin = tuple((int(i), int(s)) for i, s in self.origin)
        if origin and len(origin) != t1.shape[0]:
            raise InputError("origin must list one entry per neuron")
        t1.setflags(write=False)
        t2.setflags(write=False)
        object.__setattr__(self, "theta1", t1)
        object.__setattr__(self, "theta2", t2)
        object.__setattr__(self, "origin", origin)

    @property
    def m(self) -> int:
        return self.theta1.shape[0]

    @property
    def d(self) -> int:
        return self.theta1.shape[1]

    def hidden(self, X) -> np.ndarray:
        """Post-ReLU activations, (rows, m)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise InputError(f"inputs must have {self.d} columns, got shape {X.shape}")
        return np.maximum(X @ self.theta1.T, 0.0)

    def forward_batch(self, X) -> np.ndarray:
        return self.hidden(X) @ self.theta2

    def with_theta2(self, theta2) -> "TwoLayerNet":
        return TwoLayerNet(self.theta1, theta2, self.origin)

    def weight_decay(self) -> float:
        """``sum_j (||theta1[j]||^2 + theta2[j]^2) / 2``."""
        return 0.5 * float(np.sum(self.theta1**2) + np.sum(self.theta2**2))


def recover_network(u, patterns: PatternSet, prune_tol: float = DEFAULT_PRUNE_TOL) -> TwoLayerNet:
    d, P = patterns.d, len(patterns)
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (2 * d * P,):
        raise InputError(f"solution must have length {2 * d * P}, got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise InputError("solution contains non-finite entries")
    groups = u.reshape(2 * P, d)
    rows, outs, origin = [], [], []
    for g, vec in enumerate(groups):
        nrm = float(np.linalg.norm(vec))
        if nrm <= prune_tol:
            continue
        root = np.sqrt(nrm)
        sign = 1 if g < P else -1
        rows.append(vec / root)
        outs.append(sign * root)
        origin.append((g % P, sign))
    theta1 = np.array(rows).reshape(len(rows), d)
    return TwoLayerNet(theta1, np.array(outs), tuple(origin))


def forward(net: TwoLayerNet, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.d,):
        raise InputError(f"input must have length {net.d}, got {x.shape}")
    return float(np.maximum(net.theta1 @ x, 0.0) @ net.theta2)


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


def policy_prob(net: TwoLayerNet, x, y: int) -> float:
    """``sigmoid(y * f(x))`` for a label ``y`` in {+1, -1}."""
    if y not in (1, -1):
        raise InputError(f"label must be +1 or -1, got {y!r}")
    return float(_sigmoid(y * forward(net, x)))


def cone_violations(net: TwoLayerNet, X, patterns: PatternSet, eps: float = CONE_EPS) -> int:
    """Number of neurons whose row leaves the cone of its originating pattern.

    Inside its cone a neuron's ReLU acts exactly like the pattern's mask, so
    with zero violations the network reproduces ``F u`` on the rows of ``X``.
    """
    X = np.asarray(X, dtype=np.float64)
    bad = 0
    for row, (i, _) in zip(net.theta1, net.origin):
        sign = 2.0 * patterns.masks[i] - 1.0
        if np.min(sign * (X @ row), initial=0.0) < -eps:
            bad += 1
    return bad


def save_network(net: TwoLayerNet, manifest_path) -> Path:
    """Write ``theta1`` in the binary matrix format plus a JSON manifest.

    ``theta1`` is stored as float32; ``theta2`` is stored in the manifest at
    full precision.
    """
    manifest_path = Path(manifest_path)
    stem = manifest_path.name[: -len(".json")] if manifest_path.name.endswith(".json") else manifest_path.name
    theta1_manifest = manifest_path.parent / (stem + ".theta1.json")
    features.write_features(features.FeatureMatrix(net.theta1), theta1_manifest)
    doc = {
        "m": net.m,
        "d": net.d,
        "theta1": theta1_manifest.name,
        "theta2": [float(t) for t in net.theta2],
        "origin": [list(o) for o in net.origin],
    }
    manifest_path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return manifest_path


def load_network(manifest_path) -> TwoLayerNet:
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read network manifest {manifest_path}: {exc}") from exc
    for key in ("m", "d", "theta1", "theta2"):
        if key not in doc:
            raise InputError(f"network manifest is missing {key!r}")
    theta1 = features.load_features(manifest_path.parent / doc["theta1"]).values
    if theta1.shape != (doc["m"], doc["d"]):
        raise InputError(f"theta1 has shape {theta1.shape}, manifest says ({doc['m']}, {doc['d']})")
    return TwoLayerNet(theta1, doc["theta2"], tuple(tuple(o) for o in doc.get("origin", [])))


def network_files(manifest_path) -> list[str]:
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    return [str(manifest_path)] + features.manifest_files(manifest_path.parent / doc["theta1"])
