"""ReLU activation patterns of a fixed data matrix.

A pattern is the 0/1 vector ``1(X v >= 0)`` for some direction ``v``. Each
pattern carries a *witness* ``v`` that reproduces it exactly, so downstream
code never has to trust a mask it cannot regenerate.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import InputError

CONE_EPS = 1e-9
MAX_ENUM_ROWS = 14
MAX_ENUM_DIM = 3

_RANK_TOL = 1e-10


def as_data_matrix(X) -> np.ndarray:
    """Validate and return ``X`` as a C-contiguous float64 (n, d) array."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise InputError(f"data matrix must be 2-D with n, d >= 1, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("data matrix contains non-finite entries")
    return X


class ActivationPattern(NamedTuple):
    mask: np.ndarray
    witness: np.ndarray


@dataclass(frozen=True, eq=False)
class PatternSet:
    """Ordered, duplicate-free collection of activation patterns.

    ``masks`` has shape (K, n) and dtype bool; ``witnesses`` has shape (K, d).
    ``source`` is ``"sampled"`` (with ``seed`` and ``draws``) or ``"enumerated"``.
    """

    masks: np.ndarray
    witnesses: np.ndarray
    source: str
    seed: int | None = None
    draws: int | None = None
    n: int = field(init=False)
    d: int = field(init=False)

    def __post_init__(self):
        masks = np.ascontiguousarray(self.masks, dtype=bool)
        witnesses = np.ascontiguousarray(self.witnesses, dtype=np.float64)
        if masks.ndim != 2 or witnesses.ndim != 2 or masks.shape[0] != witnesses.shape[0]:
            raise InputError("masks and witnesses must be 2-D with matching row counts")
        masks.flags.writeable = False
        witnesses.flags.writeable = False
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "witnesses", witnesses)
        object.__setattr__(self, "n", masks.shape[1])
        object.__setattr__(self, "d", witnesses.shape[1])

    def __len__(self) -> int:
        return self.masks.shape[0]

    def __getitem__(self, i: int) -> ActivationPattern:
        return ActivationPattern(self.masks[i], self.witnesses[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def bitstrings(self) -> list[str]:
        return ["".join("1" if b else "0" for b in row) for row in self.masks]

    def check_witnesses(self, X) -> bool:
        """True iff every witness reproduces its stored mask exactly."""
        X = as_data_matrix(X)
        if len(self) == 0:
            return True
        return bool(np.array_equal((X @ self.witnesses.T >= 0).T, self.masks))

    def to_json(self) -> str:
        doc = {
            "n": self.n,
            "d": self.d,
            "source": self.source,
            "masks": self.bitstrings(),
            "witnesses": self.witnesses.tolist(),
        }
        if self.source == "sampled":
            doc["seed"] = self.seed
            doc["draws"] = self.draws
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "PatternSet":
        doc = json.loads(text)
        try:
            n, d = int(doc["n"]), int(doc["d"])
            masks = np.array([[c == "1" for c in s] for s in doc["masks"]], dtype=bool)
            witnesses = np.array(doc["witnesses"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed pattern set document: {exc}") from exc
        masks = masks.reshape(len(doc["masks"]), n)
        witnesses = witnesses.reshape(len(doc["witnesses"]), d)
        return cls(masks, witnesses, doc["source"], doc.get("seed"), doc.get("draws"))


def _dedupe(masks: np.ndarray, witnesses: np.ndarray):
    """Keep the first occurrence of every distinct mask, in draw order."""
    if masks.shape[0] == 0:
        return masks, witnesses
    _, first = np.unique(masks, axis=0, return_index=True)
    first.sort()
    return masks[first], witnesses[first]


def sample_patterns(X, P: int, seed: int) -> PatternSet:
    """Draw ``P`` standard-normal directions and keep the distinct masks.

    The result may hold fewer than ``P`` patterns; ``len()`` reports the
    actual count.
    """
    X = as_data_matrix(X)
    if P < 1:
        raise InputError("P must be >= 1")
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((P, X.shape[1]))
    masks = (X @ V.T >= 0).T
    masks, V = _dedupe(masks, V)
    return PatternSet(masks, V, "sampled", seed=int(seed), draws=int(P))


def _orth_rowspace(A: np.ndarray):
    _, s, Vt = np.linalg.svd(A, full_matrices=False)
    r = int(np.sum(s > _RANK_TOL * max(s[0], 1.0)))
    return Vt[:r].T


def _region_witnesses(A: np.ndarray) -> list[np.ndarray]:
    """One strict witness per open region of the central arrangement ``A v = 0``.

    Rows of ``A`` must be nonzero. Non-essential arrangements are reduced to
    their row space; in an essential arrangement every region is a pointed
    cone, so it touches an extreme ray, and the regions around a ray are the
    regions of the local arrangement formed by the rows vanishing on it.
    """
    q = A.shape[1]
    B = _orth_rowspace(A)
    if B.shape[1] < q:
        return [B @ w for w in _region_witnesses(A @ B)]
    if q == 1:
        return [np.array([1.0]), np.array([-1.0])]

    norms = np.linalg.norm(A, axis=1)
    out = []
    seen_rays = set()
    for S in itertools.combinations(range(A.shape[0]), q - 1):
        _, s, Vt = np.linalg.svd(A[list(S)], full_matrices=True)
        if s[-1] <= _RANK_TOL * max(s[0], 1.0):
            continue
        ray = Vt[-1]
        for rho in (ray, -ray):
            proj = A @ rho
            tied = np.abs(proj) <= _RANK_TOL * norms
            key = tuple(np.where(tied, 0, np.sign(proj)).astype(int))
            if key in seen_rays:
                continue
            seen_rays.add(key)
            # orthonormal basis of the complement of rho
            Q = np.linalg.svd(rho[None, :], full_matrices=True)[2][1:].T
            free = ~tied
            for p in _region_witnesses(A[tied] @ Q):
                step = Q @ p
                step /= np.linalg.norm(step)
                moved = np.abs(A[free] @ step)
                base = np.abs(proj[free])
                eps = 0.5 * np.min(base / np.maximum(moved, 1e-300)) if free.any() else 1.0
                out.append(rho + min(eps, 1.0) * step)
    return out


def enumerate_patterns(X) -> PatternSet:
    """All activation patterns of ``X``, one per open region of its arrangement.

    Exhaustive and therefore guarded to ``n <= 14`` and ``d <= 3``. Each
    witness satisfies ``(2D - I) X v > 0`` strictly. For rows in general
    position these are exactly the masks reachable by nonzero directions.
    Patterns are returned sorted by bitstring.
    """
    X = as_data_matrix(X)
    n, d = X.shape
    if n > MAX_ENUM_ROWS or d > MAX_ENUM_DIM:
        raise InputError(
            f"exhaustive enumeration needs n <= {MAX_ENUM_ROWS} and d <= {MAX_ENUM_DIM}, got {X.shape}"
        )
    if np.any(np.all(X == 0, axis=1)):
        raise InputError("data matrix has an all-zero row")

    witnesses = np.array(_region_witnesses(X))
    witnesses /= np.linalg.norm(witnesses, axis=1, keepdims=True)
    proj = X @ witnesses.T
    strict = np.all(np.abs(proj) > _RANK_TOL * np.linalg.norm(X, axis=1)[:, None], axis=0)
    masks = (proj >= 0).T[strict]
    witnesses = witnesses[strict]
    masks, witnesses = _dedupe(masks, witnesses)
    order = sorted(range(len(masks)), key=lambda i: masks[i].tobytes())
    return PatternSet(masks[order], witnesses[order], "enumerated")


def region_count_bound(n: int, d: int) -> int:
    """Region count of ``n`` central hyperplanes in general position in R^d."""
    from math import comb

    return 2 * sum(comb(n - 1, k) for k in range(d))


def cone_contains(pattern, X, v, eps: float = CONE_EPS) -> bool:
    """Whether ``v`` lies in the cone ``{v : (2D - I) X v >= 0}`` of ``pattern``."""
    X = as_data_matrix(X)
    mask = pattern.mask if isinstance(pattern, ActivationPattern) else np.asarray(pattern)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (X.shape[1],) or mask.shape != (X.shape[0],):
        raise InputError("shape mismatch in cone membership test")
    sign = 2.0 * mask.astype(np.float64) - 1.0
    return bool(np.all(sign * (X @ v) >= -eps))
