import numpy as np
import pytest
from hypothesis import settings

from funkspray import catalog as cat
from funkspray.jets import PhasePoint
from funkspray.sampling import draw_samples

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

SEED = 42
METRIC_NAMES = ("euclidean", "sphere", "klein", "funk-ball")


def pt(x, y) -> PhasePoint:
    return PhasePoint(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


def samples_for(name: str, n: int = 2, count: int = 200, seed: int = SEED, stream: int = 0) -> PhasePoint:
    entry = cat.METRICS.get(name) or cat.SPRAYS[name]
    return draw_samples(entry.domain, n, count, seed, stream)


@pytest.fixture(scope="session")
def ball_samples():
    return draw_samples(cat.BALL, 2, 200, SEED)
