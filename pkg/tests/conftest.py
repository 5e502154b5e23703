import numpy as np
import pytest

from pollsys import Exponential, Gamma, ScenarioConfig


def asym_var_config(**kw):
    """Symmetric-mean scenario whose queue 1 has the high-variance service
    and whose switch into queue 2 is the long switch-over."""
    base = dict(
        lambda1=0.8, lambda2=0.8,
        serve1=Gamma(1, 0.4), serve2=Gamma(30, 0.4 / 30),
        switch12=Gamma(30, 4 / 30), switch21=Gamma(1, 0.4),
        c1=1.0, c2=1.0, beta=0.05,
        X1=12, X2=12, N1=12, N2=12,
    )
    base.update(kw)
    return ScenarioConfig(**base)


def slow_mode_config(**kw):
    """Priority-queue scenario with a fluid slow mode at queue 1."""
    base = dict(
        lambda1=1.5, lambda2=0.4,
        serve1=Gamma(30, 0.1 / 30), serve2=Gamma(20, 0.5 / 20),
        switch12=Gamma(30, 2 / 30), switch21=Gamma(20, 3 / 20),
        c1=2.0, c2=1.0, beta=0.05,
        X1=12, X2=12, N1=12, N2=12,
    )
    base.update(kw)
    return ScenarioConfig(**base)


def exp_config(**kw):
    """Small all-exponential scenario, handy for closed-form checks."""
    base = dict(
        lambda1=1.0, lambda2=1.0,
        serve1=Exponential(4.0), serve2=Exponential(4.0),
        switch12=Exponential(2.0), switch21=Exponential(2.0),
        c1=1.0, c2=1.0, beta=0.05,
        X1=6, X2=6, N1=6, N2=6,
    )
    base.update(kw)
    return ScenarioConfig(**base)


@pytest.fixture
def asym_cfg():
    return asym_var_config()


@pytest.fixture
def slow_cfg():
    return slow_mode_config()


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(key=20240810))
