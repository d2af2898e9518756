"""Guided rescoring of next-token candidates with a trained head.

Every ``every_n`` steps the base probabilities of a candidate pool are tilted
toward the head's preference: ``p'_c ~ p_c * exp(lambda * s_c)`` where ``s`` is
the min-max normalized head score of each candidate's extended prefix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

MASS_SLACK = 1e-12


@dataclass(frozen=True)
class GuidanceConfig:
    guidance_scale: float = 1.0
    every_n: int = 5
    top_p: float = 0.9
    top_k: int = 50
    num_candidates: int = 5

    def __post_init__(self):
        if not self.guidance_scale >= 0:
            raise InputError("guidance scale must be nonnegative")
        if self.every_n < 1:
            raise InputError("every_n must be >= 1")
        if not 0.0 < self.top_p <= 1.0:
            raise InputError("top_p must lie in (0, 1]")
        if self.top_k < 1 or self.num_candidates < 1:
            raise InputError("top_k and num_candidates must be >= 1")

    def applies_at(self, step_index: int) -> bool:
        return step_index % self.every_n == 0


@dataclass(frozen=True, eq=False)
class CandidateBatch:
    """A candidate pool: base probabilities, prefix features and the decoding step.

    ``indices`` maps pool positions back to vocabulary ids when the pool came
    from :func:`nucleus_filter`.
    """

    base_probs: np.ndarray
    features: np.ndarray | None = None
    step_index: int = 0
    indices: np.ndarray | None = None

    def __post_init__(self):
        p = np.array(self.base_probs, dtype=np.float64, copy=True).reshape(-1)
        if p.size == 0:
            raise InputError("candidate pool is empty")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise InputError("base probabilities must be finite and nonnegative")
        if p.sum() > 1.0 + 1e-9:
            raise InputError(f"base probabilities sum to {p.sum()!r} > 1")
        object.__setattr__(self, "base_probs", p)
        if self.features is not None:
            f = np.array(self.features, dtype=np.float64, copy=True)
            if f.ndim != 2 or f.shape[0] != p.size:
                raise InputError(f"expected {p.size} feature rows, got shape {f.shape}")
            if not np.all(np.isfinite(f)):
                raise InputError("candidate features must be finite")
            object.__setattr__(self, "features", f)
        if self.step_index < 0:
            raise InputError("step_index must be nonnegative")

    def with_features(self, features) -> "CandidateBatch":
        return CandidateBatch(self.base_probs, features, self.step_index, self.indices)


def nucleus_filter(probs, top_p: float = 0.9, top_k: int = 50, num_candidates: int = 5, step_index: int = 0) -> CandidateBatch:
    """Smallest top-probability prefix reaching mass ``top_p``, cut to ``top_k`` then ``num_candidates``.

    Ties are broken by ascending index. Pool probabilities are not renormalized.
    """
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    if p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)):
        raise InputError("probs must be a nonempty nonnegative vector")
    if not 0.0 < top_p <= 1.0:
        raise InputError("top_p must lie in (0, 1]")
    if top_k < 1 or num_candidates < 1:
        raise InputError("top_k and num_candidates must be >= 1")
    order = np.argsort(-p, kind="stable")
    cum = np.cumsum(p[order])
    reach = np.flatnonzero(cum >= top_p - MASS_SLACK)
    keep = int(reach[0]) + 1 if reach.size else p.size
    keep = min(keep, top_k, num_candidates)
    idx = order[:keep]
    return CandidateBatch(p[idx], None, step_index, idx)


def score_candidates(head, features) -> np.ndarray:
    """Head output for each candidate row."""
    net = getattr(head, "net", head)
    return net.forward_batch(features)


def minmax_normalize(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if s.size == 0:
        raise InputError("need at least one score")
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.full_like(s, 0.5)
    return (s - lo) / (hi - lo)


def reweight(batch: CandidateBatch, normalized, cfg: GuidanceConfig) -> np.ndarray:
    """Tilted, renormalized pool distribution (just the renormalized base off cadence)."""
    p = batch.base_probs
    total = p.sum()
    if total <= 0:
        raise InputError("base probabilities are all zero")
    if not cfg.applies_at(batch.step_index):
        return p / total
    s = np.asarray(normalized, dtype=np.float64).reshape(-1)
    if s.shape != p.shape:
        raise InputError(f"expected {p.size} normalized scores, got {s.size}")
    # shift by the max so large scales cannot overflow
    logits = cfg.guidance_scale * (s - s.max())
    w = p * np.exp(logits)
    return w / w.sum()


def guide(head, batch: CandidateBatch, cfg: GuidanceConfig):
    """Score, normalize and reweight one pool; returns ``(distribution, selected position)``."""
    if cfg.applies_at(batch.step_index):
        if batch.features is None:
            raise InputError("candidate features are required on guided steps")
        normalized = minmax_normalize(score_candidates(head, batch.features))
    else:
        normalized = np.full(batch.base_probs.size, 0.5)
    dist = reweight(batch, normalized, cfg)
    return dist, int(np.argmax(dist))
