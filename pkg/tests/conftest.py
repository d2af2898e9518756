import numpy as np
import pytest

from cvxpref import kernels, patterns, program


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run the test once per available kernel backend."""
    with kernels.use_backend(request.param):
        yield request.param


def random_program(seed, n=5, d=3, P=4, beta_reg=0.1):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    ps = patterns.sample_patterns(X, P, seed)
    return program.ConvexProgram(X, ps, rng.standard_normal(n), beta_reg)


def small_enumerated(seed, n=6, d=2, beta_reg=0.1):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = np.sign(rng.standard_normal(n))
    return program.ConvexProgram(X, patterns.enumerate_patterns(X), y, beta_reg)


def planted_data(seed=11, n=200, d=8):
    """Labels from a planted two-layer ReLU net: ``sign(sum_j relu(T1_j . x) * t2_j)``."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    T1 = rng.standard_normal((4, d))
    t2 = np.array([1.0, -1.0, 1.0, -1.0])
    y = np.where(np.maximum(X @ T1.T, 0.0) @ t2 >= 0, 1.0, -1.0)
    return X.astype(np.float32).astype(np.float64), y


def write_labeled(dirpath, X, y, stem="data"):
    import json

    from cvxpref import features

    fpath = features.write_features(X, dirpath / f"{stem}.json")
    lpath = dirpath / f"{stem}_labels.json"
    lpath.write_text(json.dumps({"labels": [int(v) for v in y]}))
    return fpath, lpath
