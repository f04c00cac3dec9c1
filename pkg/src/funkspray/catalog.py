"""Built-in Finsler functions, candidate projective factors and sprays."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import FunkSprayError
from .geometry import Spray, flat_spray, geodesic_spray, projective_deform
from .jets import ScalarField, sqrt


@dataclass(frozen=True)
class Domain:
    """Sampling domain: ``x`` in a box or ball, ``|y|`` in an annulus."""

    kind: str = "box"  # "box" or "ball"
    size: float = 1.0  # half-width of the box or radius of the ball
    y_min: float = 0.5
    y_max: float = 2.0

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if self.kind == "ball":
            return np.linalg.norm(x, axis=-1) <= self.size
        return np.all(np.abs(x) <= self.size, axis=-1)

    def intersect(self, other: "Domain") -> "Domain":
        y_min, y_max = max(self.y_min, other.y_min), min(self.y_max, other.y_max)
        if "ball" in (self.kind, other.kind):
            size = min(d.size for d in (self, other))
            return Domain("ball", size, y_min, y_max)
        return Domain("box", min(self.size, other.size), y_min, y_max)

    def describe(self) -> str:
        return f"x:{self.kind}({self.size:g});y:annulus({self.y_min:g},{self.y_max:g})"


BOX = Domain("box", 1.0)
BALL = Domain("ball", 0.6)


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    kind: str  # "metric", "candidate" or "spray"
    description: str
    domain: Domain
    kappa: Optional[float] = None
    degree: Optional[int] = 1
    build: Callable = field(default=None, repr=False, compare=False)
    min_n: int = 2
    max_n: int = 4


# closed forms -----------------------------------------------------------------

def _dot(a, b):
    return sum((ai * bi for ai, bi in zip(a, b)), start=0.0)


def _unit_ball(x, y):
    return np.sum(np.asarray(x) ** 2, axis=-1) < 1.0


def euclidean(n: int = 2) -> ScalarField:
    """``F = |y|``; zero curvature."""
    return ScalarField(lambda xs, ys: sqrt(_dot(ys, ys)), 1, None, "euclidean", n)


def sphere(n: int = 2) -> ScalarField:
    """Round sphere in stereographic coordinates, ``F = 2|y| / (1 + |x|^2)``; flag curvature +1."""
    return ScalarField(lambda xs, ys: 2.0 * sqrt(_dot(ys, ys)) / (1.0 + _dot(xs, xs)), 1, None, "sphere", n)


def _klein_root(xs, ys):
    r2 = _dot(xs, xs)
    xy = _dot(xs, ys)
    return sqrt(_dot(ys, ys) * (1.0 - r2) + xy * xy), r2, xy


def klein(n: int = 2) -> ScalarField:
    """Klein (Beltrami) model of hyperbolic space in the unit ball; flag curvature -1."""

    def fn(xs, ys):
        root, r2, _ = _klein_root(xs, ys)
        return root / (1.0 - r2)

    return ScalarField(fn, 1, _unit_ball, "klein", n)


def funk_ball(n: int = 2) -> ScalarField:
    """Funk metric of the unit ball; projectively flat with flag curvature -1/4."""

    def fn(xs, ys):
        root, r2, xy = _klein_root(xs, ys)
        return (root + xy) / (1.0 - r2)

    return ScalarField(fn, 1, _unit_ball, "funk-ball", n)


def linear_rational(n: int = 2) -> ScalarField:
    """``P = y1 / (1 - x1)``, an exact Funk function of the flat spray."""

    def dom(x, y):
        return np.asarray(x)[..., 0] != 1.0

    return ScalarField(lambda xs, ys: ys[0] / (1.0 - xs[0]), 1, dom, "linear-rational", n)


def scaled(F: ScalarField, c: float) -> ScalarField:
    out = float(c) * F
    return ScalarField(out.fn, 1, F.domain, f"{c:g}*{F.name}", F.n)


def base_scaled(F: ScalarField, a: ScalarField) -> ScalarField:
    """``a(x) * F`` for a basic function ``a``."""
    out = a * F
    return ScalarField(out.fn, 1, out.domain, f"({a.name})*{F.name}", F.n)


METRICS = {
    "euclidean": CatalogEntry("euclidean", "metric", "F = |y|", BOX, 0.0, build=euclidean),
    "sphere": CatalogEntry("sphere", "metric", "F = 2|y|/(1+|x|^2)", BOX, 1.0, build=sphere),
    "klein": CatalogEntry(
        "klein", "metric", "F = sqrt(|y|^2(1-|x|^2)+<x,y>^2)/(1-|x|^2)", BALL, -1.0, build=klein
    ),
    "funk-ball": CatalogEntry(
        "funk-ball",
        "metric",
        "F = (sqrt(|y|^2(1-|x|^2)+<x,y>^2)+<x,y>)/(1-|x|^2)",
        BALL,
        -0.25,
        build=funk_ball,
    ),
}

CANDIDATES = {
    "theta": CatalogEntry("theta", "candidate", "P = funk-ball F", BALL, build=lambda n, **kw: funk_ball(n)),
    "linear-rational": CatalogEntry(
        "linear-rational", "candidate", "P = y1/(1-x1)", BALL, build=lambda n, **kw: linear_rational(n)
    ),
    "cF": CatalogEntry("cF", "candidate", "P = c*F (c from --c)", BOX, build=None),
    "aF": CatalogEntry("aF", "candidate", "P = a(x)*F (a from --a)", BOX, build=None),
}


def iso_deformed(n: int = 2) -> Spray:
    """Flat spray deformed by ``P = |y|``: isotropic with Ricci scalar ``|y|^2``."""
    S = projective_deform(flat_spray(n), euclidean(n))
    return Spray(S.n, S.coefficients, "iso-deformed", base=S.base, factor=S.factor, domain=S.domain)


SPRAYS = {
    "flat": CatalogEntry("flat", "spray", "G = 0 (geodesic spray of euclidean)", BOX, 0.0, build=flat_spray),
    "iso-deformed": CatalogEntry(
        "iso-deformed", "spray", "flat - 2|y|C; isotropic, rho = |y|^2", BOX, build=iso_deformed
    ),
}


def catalog() -> list:
    """All catalog entries: metrics, then candidates, then spray-only entries."""
    return list(METRICS.values()) + list(CANDIDATES.values()) + list(SPRAYS.values())


def metric(name: str, n: int = 2) -> ScalarField:
    if name == "flat":
        name = "euclidean"
    if name not in METRICS:
        raise FunkSprayError(f"unknown metric {name!r}; known: {', '.join(METRICS)}")
    return METRICS[name].build(n)


def spray(name: str, n: int = 2) -> Spray:
    """Spray by catalog name: a spray entry or the geodesic spray of a metric."""
    if name in SPRAYS:
        return SPRAYS[name].build(n)
    return geodesic_spray(metric(name, n), n)


def metric_domain(name: str) -> Domain:
    if name in SPRAYS:
        return SPRAYS[name].domain
    if name in METRICS:
        return METRICS[name].domain
    raise FunkSprayError(f"unknown metric {name!r}")
