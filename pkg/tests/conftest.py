import numpy as np
import pytest

from bbmlab import engine
from bbmlab.core import simulate_snapshot


@pytest.fixture(scope="session", autouse=True)
def _threads():
    engine.configure_threads()


@pytest.fixture(scope="session")
def small_snapshots():
    """A bag of exact snapshots with horizons <= 5 and a t/2 checkpoint,
    reused across genealogy/martingale/overlap tests."""
    snaps = []
    for k in range(40):
        horizon = 1.0 + (k % 5)
        cps = sorted({0.0, horizon / 4.0, horizon / 2.0, 3.0 * horizon / 4.0, horizon})
        snaps.append(simulate_snapshot(horizon, cps, seed=90_000 + k))
    return snaps


def combined_z(mean_a, se_a, mean_b, se_b):
    se = float(np.hypot(se_a, se_b))
    if se == 0.0:
        return 0.0 if mean_a == mean_b else float("inf")
    return abs(mean_a - mean_b) / se
