"""Deterministic sample generation (counter-based Philox streams)."""
from __future__ import annotations

import numpy as np

from .catalog import Domain
from .jets import PhasePoint


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Independent Philox generator for ``(seed, *stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


def draw_samples(domain: Domain, n: int, count: int, seed: int, stream: int = 0) -> PhasePoint:
    """``x`` uniform in the domain, ``y`` uniform direction with ``|y|`` uniform in the annulus."""
    if count < 1:
        raise ValueError("sample count must be >= 1")
    rng = rng_for(seed, stream)
    if domain.kind == "ball":
        d = rng.normal(size=(count, n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        x = d * domain.size * rng.uniform(size=(count, 1)) ** (1.0 / n)
    else:
        x = rng.uniform(-domain.size, domain.size, size=(count, n))
    u = rng.normal(size=(count, n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    y = u * rng.uniform(domain.y_min, domain.y_max, size=(count, 1))
    return PhasePoint(x, y)
