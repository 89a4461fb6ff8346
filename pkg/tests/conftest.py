import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from dyninv.operators import Covariance, DenseOp


@pytest.fixture(scope="session", autouse=True)
def single_threaded_blas():
    # small-matrix factorizations dominate; pool churn would distort timings
    with threadpool_limits(limits=1):
        yield


def random_spd(rng, n, scale=1.0):
    """Well-conditioned random SPD covariance."""
    g = rng.standard_normal((n, n))
    return Covariance.dense(scale * (g @ g.T / n + 0.5 * np.eye(n)))


def random_model(rng, n, m, T, a_scale=1.0):
    """Random dense state-space model with bounded transition norms."""
    from dyninv.ssm import SequenceModel

    return SequenceModel(
        H=[DenseOp(rng.standard_normal((m, n)) / np.sqrt(n)) for _ in range(T)],
        R=[random_spd(rng, m) for _ in range(T)],
        A=[DenseOp(a_scale * rng.standard_normal((n, n)) / np.sqrt(n)) for _ in range(T - 1)],
        Q=[random_spd(rng, n) for _ in range(T - 1)],
        m1=rng.standard_normal(n),
        P1=random_spd(rng, n),
    )
