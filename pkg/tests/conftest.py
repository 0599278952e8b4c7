from __future__ import annotations

from datetime import date

import pytest

from evsdg.core import Horizon
from evsdg.generator import TrainConfig, fit_sdg
from evsdg.mixture import EmConfig
from evsdg.reference import ReferenceProfile, reference_sessions

# small and quick; the acceptance suite trains at full scale
FAST_EM = EmConfig(restarts=2, k_max=3, max_iter=200)


@pytest.fixture(scope="session")
def small_sessions():
    return reference_sessions(ReferenceProfile(), Horizon(date(2021, 1, 4), date(2021, 1, 25)), seed=11)


@pytest.fixture(scope="session")
def small_model(small_sessions):
    model, _ = fit_sdg(small_sessions, TrainConfig(em=FAST_EM, seed=3))
    return model


@pytest.fixture(scope="session")
def fast_em():
    return FAST_EM
