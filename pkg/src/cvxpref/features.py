"""Dense feature matrices on disk and the Phase I classifier dataset.

On disk a matrix is a raw little-endian float32 row-major file next to a JSON
manifest::

    {"n": 5, "d": 3, "dtype": "f32le", "sha256": "...", "ids": [...], "data": "x.bin"}

``data`` is the binary file name relative to the manifest.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError

DTYPE = "f32le"
VARIANCE_FLOOR = 1e-12
_NP_DTYPE = np.dtype("<f4")


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray
    ids: tuple | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.ndim != 2:
            raise InputError(f"feature matrix must be 2-D, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise InputError("feature matrix contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.ids is not None:
            ids = tuple(str(i) for i in self.ids)
            if len(ids) != vals.shape[0]:
                raise InputError(f"{len(ids)} ids for {vals.shape[0]} rows")
            object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class ClassifierDataset:
    X: FeatureMatrix
    y: np.ndarray

    def __post_init__(self):
        y = np.array(self.y, dtype=np.float64, copy=True)
        if y.shape != (self.X.n,):
            raise InputError(f"labels must have shape ({self.X.n},), got {y.shape}")
        if not np.all(np.abs(y) == 1):
            raise InputError("labels must be +1 or -1")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)


def _digest(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def matrix_bytes(values) -> bytes:
    return np.ascontiguousarray(values, dtype=_NP_DTYPE).tobytes()


def write_features(fm: FeatureMatrix | np.ndarray, manifest_path, data_name: str | None = None) -> Path:
    """Write ``fm`` as a binary file plus manifest; returns the manifest path.

    Values are stored as float32, so a round trip is exact only for data
    that is already float32-representable.
    """
    if not isinstance(fm, FeatureMatrix):
        fm = FeatureMatrix(fm)
    manifest_path = Path(manifest_path)
    if data_name is None:
        stem = manifest_path.name[: -len(".json")] if manifest_path.name.endswith(".json") else manifest_path.name
        data_name = stem + ".bin"
    raw = matrix_bytes(fm.values)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    (manifest_path.parent / data_name).write_bytes(raw)
    doc = {
        "n": fm.n,
        "d": fm.d,
        "dtype": DTYPE,
        "sha256": _digest(raw),
        "ids": list(fm.ids) if fm.ids is not None else None,
        "data": data_name,
    }
    manifest_path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return manifest_path


def load_features(manifest_path) -> FeatureMatrix:
    """Load and validate a matrix written by :func:`write_features`."""
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read feature manifest {manifest_path}: {exc}") from exc
    for key in ("n", "d", "dtype", "sha256", "data"):
        if key not in doc:
            raise InputError(f"feature manifest is missing {key!r}")
    if doc["dtype"] != DTYPE:
        raise InputError(f"unsupported dtype {doc['dtype']!r}")
    n, d = int(doc["n"]), int(doc["d"])
    if n < 0 or d < 0:
        raise InputError("negative matrix shape in manifest")
    data_path = manifest_path.parent / doc["data"]
    try:
        raw = data_path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read feature data {data_path}: {exc}") from exc
    if len(raw) != n * d * _NP_DTYPE.itemsize:
        raise InputError(f"data file holds {len(raw)} bytes, manifest implies {n}x{d} float32")
    if _digest(raw) != doc["sha256"]:
        raise InputError(f"checksum mismatch for {data_path}")
    values = np.frombuffer(raw, dtype=_NP_DTYPE).reshape(n, d)
    return FeatureMatrix(values, doc.get("ids"))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def build_classifier_dataset(triplets, chosen_feats: FeatureMatrix, rejected_feats: FeatureMatrix) -> ClassifierDataset:
    """Interleave chosen (+1) and rejected (-1) rows, one pair per triplet.

    Row ids are ``<source_id>:<pair_index>:chosen`` / ``...:rejected`` so
    every row traces back to its triplet.
    """
    triplets = list(triplets)
    k = len(triplets)
    if chosen_feats.n != k or rejected_feats.n != k:
        raise InputError(
            f"{k} triplets but {chosen_feats.n} chosen and {rejected_feats.n} rejected feature rows"
        )
    if chosen_feats.d != rejected_feats.d:
        raise InputError("chosen and rejected features have different widths")
    d = chosen_feats.d
    X = np.empty((2 * k, d))
    X[0::2] = chosen_feats.values
    X[1::2] = rejected_feats.values
    y = np.tile([1.0, -1.0], k)
    ids = []
    for t in triplets:
        base = f"{t.source_id}:{t.pair_index}"
        ids += [base + ":chosen", base + ":rejected"]
    return ClassifierDataset(FeatureMatrix(X, ids), y)


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.mean.shape[0]:
            raise InputError(f"expected {self.mean.shape[0]} columns, got shape {X.shape}")
        return (X - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, doc) -> "Standardizer":
        return cls(np.asarray(doc["mean"], dtype=np.float64), np.asarray(doc["scale"], dtype=np.float64))


def fit_standardizer(X) -> Standardizer:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InputError("standardization needs at least two rows")
    mean = X.mean(axis=0)
    var = X.var(axis=0)
    scale = np.where(var > VARIANCE_FLOOR, np.sqrt(var), 1.0)
    return Standardizer(mean, scale)


def standardize(fm: FeatureMatrix):
    """Column-wise zero mean, unit variance; returns ``(matrix, mean, scale)``."""
    st = fit_standardizer(fm.values)
    return FeatureMatrix(st.apply(fm.values), fm.ids), st.mean, st.scale


def manifest_files(manifest_path) -> list[str]:
    """Paths of a manifest and its data file, for digesting."""
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    return [os.fspath(manifest_path), os.fspath(manifest_path.parent / doc["data"])]
