"""Spray geometry in induced coordinates.

A spray ``S = y^i d/dx^i - 2 G^i d/dy^i`` is represented by its coefficient
jets ``G^i``.  Everything else is derived from them at the requested points:

* nonlinear connection ``N^i_j = dG^i/dy^j`` and ``delta_j = d/dx^j - N^i_j d/dy^i``
* Jacobi endomorphism ``Phi^i_j = 2 dG^i/dx^j - S(N^i_j) - N^i_k N^k_j``
* curvature ``R^i_jk = delta_k N^i_j - delta_j N^i_k``

With these sign conventions ``y^j R^i_jk = Phi^i_k`` and ``d_h d_h = d_R`` hold
with unit factors.  Semi-basic forms are plain component arrays in the ``dx``
basis; 2-forms are antisymmetric ``(n, n)`` arrays.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import DomainError, HomogeneityError, SingularMetric
from .jets import Jet, PhasePoint, ScalarField, euler_residual, jet_eval, lift

COND_LIMIT = 1e12
HOMOGENEITY_TOL = 1e-8

CoefficientFn = Callable[[PhasePoint, int], list]


@dataclass(frozen=True)
class Spray:
    """Spray coefficients ``G^i`` plus provenance.

    ``coefficients(p, order)`` returns ``n`` jets of the given order at ``p``.
    """

    n: Optional[int]
    coefficients: CoefficientFn
    tag: str
    metric: Optional[ScalarField] = None
    base: Optional["Spray"] = None
    factor: Optional[ScalarField] = None
    domain: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def G(self, p: PhasePoint, order: int = 0) -> list:
        if self.n is not None and p.n != self.n:
            raise ValueError(f"spray has dimension {self.n}, point has {p.n}")
        if self.domain is not None and not np.all(self.domain(p.x, p.y)):
            raise DomainError(f"point outside the domain of spray {self.tag}")
        return self.coefficients(p, order)

    def G_values(self, p: PhasePoint) -> np.ndarray:
        return _stack([g.value for g in self.G(p, 0)])


@dataclass(frozen=True)
class MetricTensor:
    g: np.ndarray

    @property
    def condition(self) -> np.ndarray:
        return np.linalg.cond(self.g)


@dataclass(frozen=True)
class ConnectionData:
    """Connection coefficients at point(s); ``N[..., i, j] = N^i_j``."""

    N: np.ndarray
    G: np.ndarray
    y: np.ndarray

    @property
    def horizontal_projector(self) -> np.ndarray:
        """Matrix of ``h`` in the basis ``(d/dx, d/dy)`` acting on column vectors."""
        n = self.N.shape[-1]
        h = np.zeros(self.N.shape[:-2] + (2 * n, 2 * n))
        h[..., :n, :n] = np.eye(n)
        h[..., n:, :n] = -self.N
        return h

    def delta(self, df_dx: np.ndarray, df_dy: np.ndarray) -> np.ndarray:
        """Apply the horizontal frame ``delta_j`` to a function given its partials."""
        return df_dx - np.einsum("...ij,...i->...j", self.N, df_dy)

    def spray_vector(self) -> np.ndarray:
        return np.concatenate([self.y, -2.0 * self.G], axis=-1)


@dataclass(frozen=True)
class JacobiEndo:
    """``Phi[..., i, j] = Phi^i_j``."""

    Phi: np.ndarray


@dataclass(frozen=True)
class CurvatureR:
    """``R[..., i, j, k] = R^i_jk``, antisymmetric in ``(j, k)``."""

    R: np.ndarray


@dataclass(frozen=True)
class SemiBasicOneForm:
    components: np.ndarray


@dataclass(frozen=True)
class SemiBasicTwoForm:
    components: np.ndarray


def _stack(arrs, axis=-1):
    return np.stack([np.asarray(a, dtype=float) for a in arrs], axis=axis)


def _values(jets) -> np.ndarray:
    return _stack([j.value for j in jets])


def _matrix_values(rows) -> np.ndarray:
    return _stack([_values(r) for r in rows], axis=-2)


def _check_condition(g0: np.ndarray) -> None:
    cond = np.linalg.cond(g0)
    if not np.all(np.isfinite(cond)) or np.any(cond > COND_LIMIT):
        raise SingularMetric(f"metric condition number {np.max(cond):.3g} exceeds {COND_LIMIT:g}")


def jet_solve(A: Sequence[Sequence[Jet]], b: Sequence[Jet]) -> list:
    """Solve ``A X = b`` for jet-valued ``A`` and ``b``.

    The constant part is solved numerically (LU with partial pivoting, batched)
    and the higher-order terms by the terminating fixed-point iteration
    ``X = A0^{-1} (b - T X)`` where ``T = A - A0`` has no constant term.
    """
    n = len(b)
    order = min(min(a.order for a in row) for row in A)
    order = min(order, min(bi.order for bi in b))
    A0 = _matrix_values(A)
    _check_condition(A0)
    A0inv = np.linalg.inv(A0)
    T = [[A[i][j] - A[i][j].value for j in range(n)] for i in range(n)]
    X = None
    for _ in range(order + 1):
        rhs = list(b)
        if X is not None:
            rhs = [b[i] - sum((T[i][j] * X[j] for j in range(n)), start=0.0) for i in range(n)]
        X = [sum((rhs[j] * A0inv[..., i, j] for j in range(n)), start=0.0) for i in range(n)]
    return X


def _square(F: ScalarField, p: PhasePoint, order: int) -> Jet:
    Fj = jet_eval(F, p, order)
    return Fj * Fj


def metric_tensor(F: ScalarField, p: PhasePoint) -> MetricTensor:
    """``g_ij = 1/2 d^2 F^2 / dy^i dy^j``."""
    n = p.n
    F2 = _square(F, p, 2)
    g = np.empty(p.batch_shape + (n, n))
    for i in range(n):
        for j in range(i, n):
            mi = [0] * (2 * n)
            mi[n + i] += 1
            mi[n + j] += 1
            g[..., i, j] = g[..., j, i] = 0.5 * F2.derivative(mi)
    _check_condition(g)
    return MetricTensor(g)


def geodesic_spray(F: ScalarField, n: Optional[int] = None) -> Spray:
    """Spray determined by ``i_S dd_J F^2 = -dF^2``.

    In coordinates ``G^i = 1/4 g^{il} (y^k d^2F^2/dy^l dx^k - dF^2/dx^l)``.
    """

    def coefficients(p: PhasePoint, order: int) -> list:
        n = p.n
        F2 = _square(F, p, order + 2)
        ys = lift(p, order)[1]
        dy = [F2.deriv(n + l) for l in range(n)]
        A = [[dy[l].deriv(n + m) for m in range(n)] for l in range(n)]
        b = [
            sum((ys[k] * dy[l].deriv(k) for k in range(n)), start=0.0) - F2.deriv(l).truncate(order)
            for l in range(n)
        ]
        # A is the Hessian of F^2, i.e. 2 g, so G = 1/2 A^{-1} b
        return [0.5 * x for x in jet_solve(A, b)]

    return Spray(n=n or F.n, coefficients=coefficients, tag=f"geodesic({F.name})", metric=F, domain=F.domain)


def flat_spray(n: int) -> Spray:
    if n < 2:
        raise ValueError("n must be >= 2")

    def coefficients(p: PhasePoint, order: int) -> list:
        return [Jet.constant(np.zeros(p.batch_shape), 2 * n, order) for _ in range(n)]

    return Spray(n=n, coefficients=coefficients, tag="flat")


def user_spray(fields: Sequence[ScalarField], tag: str = "user") -> Spray:
    n = len(fields)

    def coefficients(p: PhasePoint, order: int) -> list:
        xs, ys = lift(p, order)
        return [f(xs, ys) for f in fields]

    return Spray(n=n, coefficients=coefficients, tag=tag)


def probe_points(n: int, count: int = 16, radius: float = 0.3, seed: int = 0) -> PhasePoint:
    """Small deterministic point set used for structural checks."""
    rng = np.random.Generator(np.random.Philox(seed))
    d = rng.normal(size=(count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    x = d * radius * rng.uniform(size=(count, 1)) ** (1.0 / n)
    u = rng.normal(size=(count, n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    y = u * rng.uniform(0.5, 2.0, size=(count, 1))
    return PhasePoint(x, y)


def check_homogeneity(f: ScalarField, degree: int, samples: Optional[PhasePoint] = None, tol: float = HOMOGENEITY_TOL) -> float:
    """Raise :class:`HomogeneityError` unless Euler's relation holds at the samples."""
    if samples is None:
        raise ValueError("samples required")
    mask = f.in_domain(samples)
    if not np.any(mask):
        raise DomainError(f"no probe point inside the domain of {f.name}")
    pts = samples[mask]
    val = jet_eval(f, pts, 0).value
    res = np.abs(euler_residual(f, pts, degree)) / (1.0 + np.abs(val))
    worst = float(np.max(res))
    if worst > tol:
        raise HomogeneityError(f"{f.name} is not {degree}-homogeneous in y (Euler residual {worst:.3g})")
    return worst


def projective_deform(S: Spray, P: ScalarField, samples: Optional[PhasePoint] = None) -> Spray:
    """``S - 2 P C``, i.e. ``G~^i = G^i + P y^i``."""
    if samples is None:
        samples = probe_points(S.n or P.n or 2)
    check_homogeneity(P, 1, samples)

    def coefficients(p: PhasePoint, order: int) -> list:
        xs, ys = lift(p, order)
        Pj = P(xs, ys)
        return [g + Pj * ys[i] for i, g in enumerate(S.coefficients(p, order))]

    domain = S.domain
    if P.domain is not None:
        domain = P.domain if domain is None else (lambda x, y: np.logical_and(S.domain(x, y), P.domain(x, y)))
    return Spray(
        n=S.n,
        coefficients=coefficients,
        tag=f"deformed({S.tag}, {P.name})",
        base=S,
        factor=P,
        domain=domain,
    )


class LocalGeometry:
    """Jet-level geometric data of a spray at a batch of points.

    ``order`` is the jet order of the spray coefficients; derived objects lose
    one order per derivative (``N``: order-1, ``Phi`` and ``R``: order-2).
    """

    def __init__(self, S: Spray, p: PhasePoint, order: int = 3):
        self.S = S
        self.p = p
        self.n = p.n
        self.order = order
        self.G = S.G(p, order)
        self.xs, self.ys = lift(p, order)

    def field(self, f: ScalarField) -> Jet:
        if not np.all(f.in_domain(self.p)):
            raise DomainError(f"point outside the domain of {f.name}")
        return f(self.xs, self.ys)

    @functools.cached_property
    def N(self) -> list:
        n = self.n
        return [[self.G[i].deriv(n + j) for j in range(n)] for i in range(n)]

    @functools.cached_property
    def Phi(self) -> list:
        n = self.n
        N = self.N
        out = []
        for i in range(n):
            row = []
            for j in range(n):
                val = 2.0 * self.G[i].deriv(j) - self.S_of(N[i][j])
                val = val - sum((N[i][k] * N[k][j] for k in range(n)), start=0.0)
                row.append(val)
            out.append(row)
        return out

    @functools.cached_property
    def R(self) -> list:
        n = self.n
        out = [[[None] * n for _ in range(n)] for _ in range(n)]
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    if j == k:
                        out[i][j][k] = self.N[i][j].truncate(self.order - 2) * 0.0
                    elif j < k:
                        val = self.delta(self.N[i][j], k) - self.delta(self.N[i][k], j)
                        out[i][j][k] = val
                        out[i][k][j] = -val
        return out

    # operators on function jets -------------------------------------------
    def delta(self, f: Jet, j: int) -> Jet:
        n = self.n
        return f.deriv(j) - sum((self.N[i][j] * f.deriv(n + i) for i in range(n)), start=0.0)

    def S_of(self, f: Jet) -> Jet:
        n = self.n
        out = sum((self.ys[k] * f.deriv(k) for k in range(n)), start=0.0)
        return out - 2.0 * sum((self.G[k] * f.deriv(n + k) for k in range(n)), start=0.0)

    def dJ(self, f: Jet) -> list:
        return [f.deriv(self.n + i) for i in range(self.n)]

    def dh(self, f: Jet) -> list:
        return [self.delta(f, j) for j in range(self.n)]

    def dPhi(self, f: Jet) -> list:
        n = self.n
        fy = self.dJ(f)
        return [sum((self.Phi[i][j] * fy[i] for i in range(n)), start=0.0) for j in range(n)]

    def dR(self, f: Jet) -> list:
        n = self.n
        fy = self.dJ(f)

        def comp(j, k):
            return sum((self.R[i][j][k] * fy[i] for i in range(n)), start=0.0)

        return _antisym(n, comp)

    # operators on semi-basic 1-forms ---------------------------------------
    def dJ1(self, alpha: Sequence[Jet]) -> list:
        n = self.n
        return _antisym(n, lambda j, k: alpha[k].deriv(n + j) - alpha[j].deriv(n + k))

    def dh1(self, alpha: Sequence[Jet]) -> list:
        return _antisym(self.n, lambda j, k: self.delta(alpha[k], j) - self.delta(alpha[j], k))

    def dPhi1(self, alpha: Sequence[Jet]) -> list:
        n = self.n

        def comp(a, b):
            return sum(
                (self.Phi[i][a] * alpha[b].deriv(n + i) - self.Phi[i][b] * alpha[a].deriv(n + i) for i in range(n)),
                start=0.0,
            )

        return _antisym(n, comp)

    def iS2(self, omega) -> list:
        n = self.n
        return [sum((self.ys[j] * omega[j][k] for j in range(n)), start=0.0) for k in range(n)]


def _antisym(n: int, comp) -> list:
    out = [[None] * n for _ in range(n)]
    for j in range(n):
        for k in range(j + 1, n):
            v = comp(j, k)
            out[j][k] = v
            out[k][j] = -v
    for j in range(n):
        ref = out[j][(j + 1) % n]
        out[j][j] = ref * 0.0
    return out


def one_form_values(alpha) -> np.ndarray:
    return _values(alpha)


def two_form_values(omega) -> np.ndarray:
    return _matrix_values(omega)


# public pointwise operations -------------------------------------------------

def connection(S: Spray, p: PhasePoint) -> ConnectionData:
    geo = LocalGeometry(S, p, 1)
    return ConnectionData(N=_matrix_values(geo.N), G=_values(geo.G), y=np.asarray(p.y))


def jacobi(S: Spray, p: PhasePoint) -> JacobiEndo:
    return JacobiEndo(_matrix_values(LocalGeometry(S, p, 2).Phi))


def curvature_R(S: Spray, p: PhasePoint) -> CurvatureR:
    geo = LocalGeometry(S, p, 2)
    R = _stack([_matrix_values(geo.R[i]) for i in range(S.n)], axis=-3)
    return CurvatureR(R)


def d_on_function(which: str, S: Optional[Spray], f: ScalarField, p: PhasePoint) -> SemiBasicOneForm:
    """Components of ``d_J f``, ``d_h f`` or ``d_Phi f``."""
    if which == "J":
        xs, ys = lift(p, 1)
        if not np.all(f.in_domain(p)):
            raise DomainError(f"point outside the domain of {f.name}")
        fj = f(xs, ys)
        return SemiBasicOneForm(_values([fj.deriv(p.n + i) for i in range(p.n)]))
    if S is None:
        raise ValueError(f"d_{which} needs a spray")
    if which == "h":
        geo = LocalGeometry(S, p, 1)
        return SemiBasicOneForm(_values(geo.dh(geo.field(f))))
    if which in ("Phi", "Φ"):
        geo = LocalGeometry(S, p, 2)
        return SemiBasicOneForm(_values(geo.dPhi(geo.field(f))))
    raise ValueError(f"unknown derivation {which!r}; expected J, h or Phi")


def d_R_on_function(S: Spray, f: ScalarField, p: PhasePoint) -> SemiBasicTwoForm:
    geo = LocalGeometry(S, p, 2)
    return SemiBasicTwoForm(_matrix_values(geo.dR(geo.field(f))))


OneFormField = Union[Sequence[ScalarField], Callable[[LocalGeometry], list]]


def form_of(which: str, f: ScalarField) -> Callable[[LocalGeometry], list]:
    """Jet-evaluable 1-form field ``d_which f`` for use with :func:`d_h_on_oneform`."""
    ops = {"J": LocalGeometry.dJ, "h": LocalGeometry.dh, "Phi": LocalGeometry.dPhi}
    op = ops[which]
    return lambda geo: op(geo, geo.field(f))


def d_h_on_oneform(S: Spray, alpha: OneFormField, p: PhasePoint, order: int = 3) -> SemiBasicTwoForm:
    """``(d_h alpha)_jk = delta_j alpha_k - delta_k alpha_j``."""
    geo = LocalGeometry(S, p, order)
    if callable(alpha):
        comps = alpha(geo)
    else:
        comps = [geo.field(a) for a in alpha]
    return SemiBasicTwoForm(_matrix_values(geo.dh1(comps)))


def geodesic_residual(F: ScalarField, p: PhasePoint, S: Optional[Spray] = None) -> np.ndarray:
    """Components of ``i_S dd_J F^2 + dF^2`` in the basis ``(dx, dy)``."""
    n = p.n
    S = geodesic_spray(F) if S is None else S
    F2 = _square(F, p, 2)
    G = S.G_values(p)
    y = p.y

    def d(*vs):
        mi = [0] * (2 * n)
        for v in vs:
            mi[v] += 1
        return F2.derivative(mi)

    out = np.zeros(p.batch_shape + (2 * n,))
    for k in range(n):
        acc = d(k)
        for j in range(n):
            acc = acc + y[..., j] * d(j, n + k) - y[..., j] * d(k, n + j) - 2.0 * G[..., j] * d(n + j, n + k)
        out[..., k] = acc
        acc = d(n + k)
        for j in range(n):
            acc = acc - y[..., j] * d(n + j, n + k)
        out[..., n + k] = acc
    return out
