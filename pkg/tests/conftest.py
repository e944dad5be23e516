import numpy as np
import pytest

from peridiv import ModelSpec, ScaleContext, TimePreference, solve_optimal

# diffusion-perturbed baseline: single exponential jump phase
BASELINE = ModelSpec(0.027, 0.09, ((1.0, 33.33),))
BASE_TP = TimePreference(0.04, 0.003)
KAPPA = 0.06

# bounded-variation companion (sigma = 0)
BV_MODEL = ModelSpec(0.03, 0.0, ((1.0, 25.0),))
BV_TP = TimePreference(0.05, 0.004)

# perturbed models for the identity batteries
PERTURBED = (
    ModelSpec(0.03, 0.12, ((1.2, 25.0),)),
    ModelSpec(0.025, 0.07, ((0.6, 20.0), (0.5, 50.0))),
)

# drift barely below the gain rate: Q(0) >= 0, so b* = 0
TINY_MU = ModelSpec(0.0299, 0.09, ((1.0, 33.33),))

PURE_DIFFUSION = ModelSpec(0.027, 0.09, ())


@pytest.fixture(scope="session")
def ctx() -> ScaleContext:
    return ScaleContext(BASELINE, BASE_TP)


@pytest.fixture(scope="session")
def bv_ctx() -> ScaleContext:
    return ScaleContext(BV_MODEL, BV_TP)


@pytest.fixture(scope="session")
def opt(ctx):
    return solve_optimal(ctx, KAPPA)


@pytest.fixture(scope="session")
def bv_opt(bv_ctx):
    return solve_optimal(bv_ctx, KAPPA)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260810)
