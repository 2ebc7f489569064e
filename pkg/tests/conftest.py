import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stoch_bvp.model import BoundaryKind, ProblemSpec

settings.register_profile(
    "repro",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repro")


def zeros2(t, x):
    return np.zeros(np.broadcast(t, x).shape)


def zeros1(t):
    return np.zeros(np.shape(t))


def ones1(t):
    return np.ones(np.shape(t))


def const1(c):
    return lambda t: np.full(np.shape(t), float(c))


def make_spec(
    boundary=BoundaryKind.SECOND_KIND,
    p=1.0,
    B=None,
    B_x=None,
    f=None,
    delta=None,
    beta_star=0.0,
    beta=0.0,
):
    return ProblemSpec(
        p=p,
        B=B if B is not None else zeros2,
        B_x=B_x if B_x is not None else zeros2,
        f=f if f is not None else zeros1,
        delta=delta if delta is not None else zeros1,
        beta_star=beta_star,
        beta=beta,
        boundary=boundary,
    )


def sine_drift_spec(boundary=BoundaryKind.SECOND_KIND, scale=0.5, p=1.0, f=None, delta=None):
    """Bounded drift B = scale*sin(x) with its derivative and honest bounds."""
    return make_spec(
        boundary=boundary,
        p=p,
        B=lambda t, x: scale * np.sin(x) * np.ones(np.broadcast(t, x).shape),
        B_x=lambda t, x: scale * np.cos(x) * np.ones(np.broadcast(t, x).shape),
        f=f,
        delta=delta,
        beta_star=abs(scale),
        beta=abs(scale),
    )


@pytest.fixture
def all_kinds():
    return tuple(BoundaryKind)
