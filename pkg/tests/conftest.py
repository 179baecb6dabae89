from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from gmis.mis_core import Normal, ProposalSet, Uniform
from gmis.rng import substream

CANONICAL_DOMAIN = (-10.0, 14.0)


@pytest.fixture()
def rng() -> np.random.Generator:
    return substream(1234, 0)


@pytest.fixture()
def three_gaussians() -> ProposalSet:
    return ProposalSet([Normal(0.0, 1.0), Normal(2.0, 1.0), Normal(4.0, 1.0)], CANONICAL_DOMAIN)


@pytest.fixture()
def two_uniforms() -> ProposalSet:
    return ProposalSet([Uniform(0.0, 1.0), Uniform(0.0, 2.0)], (0.0, 2.0))


@pytest.fixture()
def canonical_target() -> Normal:
    return Normal(1.0, 0.5)


@pytest.fixture()
def fixtures_dir() -> Path:
    return Path(__file__).resolve().parent.parent / "src" / "gmis" / "fixtures"
