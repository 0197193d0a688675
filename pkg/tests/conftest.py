import numpy as np
import pytest

from ctrlrom.numerics import InnerProduct
from ctrlrom.system import ProblemInstance, TimeGrid


def make_instance(A, B, x0, xT, M, R, weight=1.0, T=1.0, n_t=64):
    """Small hand-assembled instance for unit tests."""
    return ProblemInstance(
        A=np.atleast_2d(np.asarray(A, dtype=float)),
        B=np.atleast_2d(np.asarray(B, dtype=float)),
        x0=np.atleast_1d(np.asarray(x0, dtype=float)),
        xT=np.atleast_1d(np.asarray(xT, dtype=float)),
        M=np.atleast_2d(np.asarray(M, dtype=float)),
        R=np.atleast_2d(np.asarray(R, dtype=float)),
        ip=InnerProduct(weight=weight),
        grid=TimeGrid(T=T, n_t=n_t),
    )


def scalar_instance(a=0.0, b=1.0, x0=1.0, xT=0.0, m=1.0, r=1.0, T=1.0, n_t=64, weight=1.0):
    """1-dimensional instance with scalar system data."""
    return make_instance([[a]], [[b]], [x0], [xT], [[m]], [[r]], weight=weight, T=T, n_t=n_t)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
