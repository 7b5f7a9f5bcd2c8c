import numpy as np
import pytest

from fracsteer.controllability import assemble_gramian
from fracsteer.experiments import load_config
from fracsteer.fractional_oracle import TimeGrid
from fracsteer.mild_solver import KernelEvaluator
from fracsteer.system_model import (ControlOperator, NonlocalCondition, ProblemConfig,
                                    SpectralOperator, zero_term)


def make_config(alpha=0.75, lam=(1.0,), b=(1.0,), coeffs=(), times=(), term=None, horizon=1.0,
                **extra):
    """Small helper so tests can spell out a model in one line."""
    return ProblemConfig(
        alpha=alpha,
        horizon_b=horizon,
        operator=SpectralOperator(list(lam)),
        control=ControlOperator(list(b)),
        nonlocal_=NonlocalCondition(list(coeffs), list(times)),
        nonsmooth=term if term is not None else zero_term(),
        **extra,
    )


def make_kernel(**kwargs):
    override = kwargs.pop("override", False)
    return KernelEvaluator.build(make_config(**kwargs), override=override)


@pytest.fixture(scope="session")
def heat_cfg():
    return load_config(preset="heat")


@pytest.fixture(scope="session")
def heat_kernel(heat_cfg):
    return heat_cfg.kernel()


@pytest.fixture(scope="session")
def heat_gram(heat_kernel):
    return assemble_gramian(heat_kernel)


@pytest.fixture(scope="session")
def heat_grid(heat_cfg):
    return heat_cfg.time_grid()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit_grid():
    return TimeGrid.uniform_grid(1.0, 100)
