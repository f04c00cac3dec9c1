"""Truncated multivariate Taylor arithmetic over phase-space coordinates.

A :class:`Jet` stores the Taylor coefficients of a scalar around a point of
the slit tangent space, for every multi-index of total degree ``<= order`` in
the ``2n`` variables ``(x1..xn, y1..yn)``.  Coefficients live in a dense array
of shape ``(ncoef, *batch)`` so that one jet can carry a whole batch of sample
points; all arithmetic is vectorised over the trailing batch axes.

Monomials are ordered by degree, so the table of order ``k - 1`` is a prefix
of the table of order ``k`` and truncation is plain slicing.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError

MAX_ORDER = 8


class _Table:
    def __init__(self, dim: int, order: int):
        exps = []
        for deg in range(order + 1):
            for combo in itertools.combinations_with_replacement(range(dim), deg):
                e = [0] * dim
                for v in combo:
                    e[v] += 1
                exps.append(tuple(e))
        self.dim = dim
        self.order = order
        self.exps = np.array(exps, dtype=np.int64).reshape(-1, dim)
        self.index = {e: i for i, e in enumerate(exps)}
        self.size = len(exps)
        self.degree = self.exps.sum(axis=1)
        self.factorial = np.array(
            [math.prod(math.factorial(k) for k in e) for e in exps], dtype=float
        )

        a_idx, b_idx, tgt = [], [], []
        for i, ea in enumerate(exps):
            for j in range(ncoef(dim, order - int(self.degree[i]))):
                eb = exps[j]
                a_idx.append(i)
                b_idx.append(j)
                tgt.append(self.index[tuple(p + q for p, q in zip(ea, eb))])
        tgt = np.asarray(tgt)
        perm = np.argsort(tgt, kind="stable")
        self.mul_a = np.asarray(a_idx)[perm]
        self.mul_b = np.asarray(b_idx)[perm]
        self.mul_starts = np.searchsorted(tgt[perm], np.arange(self.size))

        # derivative w.r.t. variable v maps order-k coefficients to order k-1
        self.deriv = []
        if order >= 1:
            lower = ncoef(dim, order - 1)
            for v in range(dim):
                src = np.empty(lower, dtype=np.int64)
                fac = np.empty(lower)
                for t in range(lower):
                    e = list(exps[t])
                    fac[t] = e[v] + 1
                    e[v] += 1
                    src[t] = self.index[tuple(e)]
                self.deriv.append((src, fac))


def ncoef(dim: int, order: int) -> int:
    """Number of monomials of total degree <= order in ``dim`` variables."""
    if order < 0:
        return 0
    return math.comb(dim + order, order)


@functools.lru_cache(maxsize=None)
def table(dim: int, order: int) -> _Table:
    if order > MAX_ORDER:
        raise ValueError(f"jet order {order} exceeds the supported maximum {MAX_ORDER}")
    return _Table(dim, order)


def _column(vec: np.ndarray, batch_ndim: int) -> np.ndarray:
    return vec.reshape(vec.shape + (1,) * batch_ndim)


class Jet:
    """Immutable truncated Taylor expansion, possibly batched over points."""

    __slots__ = ("coef", "dim", "order")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, coef: np.ndarray, dim: int, order: int):
        coef = np.asarray(coef, dtype=float)
        if coef.shape[0] != ncoef(dim, order):
            raise ValueError("coefficient array does not match (dim, order)")
        coef.setflags(write=False)
        self.coef = coef
        self.dim = dim
        self.order = order

    # construction -------------------------------------------------------
    @classmethod
    def constant(cls, value, dim: int, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        coef = np.zeros((ncoef(dim, order),) + value.shape)
        coef[0] = value
        return cls(coef, dim, order)

    @classmethod
    def variable(cls, value, var: int, dim: int, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        coef = np.zeros((ncoef(dim, order),) + value.shape)
        coef[0] = value
        if order >= 1:
            coef[1 + var] = 1.0
        return cls(coef, dim, order)

    # inspection -----------------------------------------------------------
    @property
    def batch_shape(self) -> tuple:
        return self.coef.shape[1:]

    @property
    def value(self) -> np.ndarray:
        return self.coef[0]

    def coefficient(self, multi_index: Sequence[int]) -> np.ndarray:
        mi = tuple(int(k) for k in multi_index)
        if len(mi) != self.dim:
            raise ValueError(f"multi-index must have length {self.dim}")
        if sum(mi) > self.order:
            raise ValueError(f"multi-index degree {sum(mi)} exceeds jet order {self.order}")
        return self.coef[table(self.dim, self.order).index[mi]]

    def derivative(self, multi_index: Sequence[int]) -> np.ndarray:
        """Mixed partial derivative at the expansion point."""
        mi = tuple(int(k) for k in multi_index)
        c = self.coefficient(mi)
        return c * math.prod(math.factorial(k) for k in mi)

    def __repr__(self):
        return f"Jet(dim={self.dim}, order={self.order}, batch={self.batch_shape}, value={self.value!r})"

    # structural ops ---------------------------------------------------------
    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError("cannot raise the order of a jet")
        if order == self.order:
            return self
        return Jet(self.coef[: ncoef(self.dim, order)], self.dim, order)

    def deriv(self, var: int) -> "Jet":
        """Exact partial derivative as a jet of one order less."""
        if self.order < 1:
            raise ValueError("cannot differentiate an order-0 jet")
        src, fac = table(self.dim, self.order).deriv[var]
        coef = self.coef[src] * _column(fac, self.coef.ndim - 1)
        return Jet(coef, self.dim, self.order - 1)

    def _broadcast(self, shape: tuple) -> np.ndarray:
        if self.batch_shape == shape:
            return self.coef
        # batch axes align from the right, as in numpy broadcasting
        pad = (1,) * (len(shape) - len(self.batch_shape))
        coef = self.coef.reshape((self.coef.shape[0],) + pad + self.batch_shape)
        return np.broadcast_to(coef, (self.coef.shape[0],) + shape)

    def _align(self, other: "Jet"):
        if other.dim != self.dim:
            raise ValueError(f"jet dimension mismatch: {self.dim} vs {other.dim}")
        order = min(self.order, other.order)
        a, b = self.truncate(order), other.truncate(order)
        shape = np.broadcast_shapes(a.batch_shape, b.batch_shape)
        return a._broadcast(shape), b._broadcast(shape), order

    def _with_constant(self, value) -> "Jet":
        value = np.asarray(value, dtype=float)
        shape = np.broadcast_shapes(self.batch_shape, value.shape)
        coef = np.array(self._broadcast(shape))
        coef[0] = coef[0] + value
        return Jet(coef, self.dim, self.order)

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet):
            a, b, order = self._align(other)
            return Jet(a + b, self.dim, order)
        return self._with_constant(other)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coef, self.dim, self.order)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b, order = self._align(other)
            tab = table(self.dim, order)
            prod = a[tab.mul_a] * b[tab.mul_b]
            return Jet(np.add.reduceat(prod, tab.mul_starts, axis=0), self.dim, order)
        other = np.asarray(other, dtype=float)
        shape = np.broadcast_shapes(self.batch_shape, other.shape)
        return Jet(self._broadcast(shape) * other, self.dim, self.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        other = np.asarray(other, dtype=float)
        if np.any(other == 0):
            raise DomainError("division by zero")
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, exponent):
        if isinstance(exponent, (bool, np.bool_)) or not float(exponent).is_integer():
            raise TypeError("jets support integer exponents only; use sqrt for square roots")
        k = int(exponent)
        if k < 0:
            return self.reciprocal() ** (-k)
        result = None
        base = self
        while k:
            if k & 1:
                result = base if result is None else result * base
            k >>= 1
            if k:
                base = base * base
        if result is None:
            return Jet.constant(np.ones(self.batch_shape), self.dim, self.order)
        return result

    def _series(self, coeffs: Sequence[np.ndarray]) -> "Jet":
        """Compose a univariate Taylor series ``sum_k coeffs[k] t**k`` with ``t = self - value``."""
        t_coef = np.array(self.coef)
        t_coef[0] = 0.0
        t = Jet(t_coef, self.dim, self.order)
        result = Jet.constant(coeffs[self.order], self.dim, self.order)
        for k in range(self.order - 1, -1, -1):
            result = result * t + coeffs[k]
        return result

    def reciprocal(self) -> "Jet":
        c0 = self.value
        if np.any(c0 == 0) or not np.all(np.isfinite(c0)):
            raise DomainError("division by a jet with zero constant term")
        inv = 1.0 / c0
        coeffs = [(-1.0) ** k * inv ** (k + 1) for k in range(self.order + 1)]
        return self._series(coeffs)

    def sqrt(self) -> "Jet":
        c0 = self.value
        if np.any(~(c0 > 0)):
            raise DomainError("sqrt of a jet with non-positive constant term")
        coeffs = [_binom_half(k) * c0 ** (0.5 - k) for k in range(self.order + 1)]
        return self._series(coeffs)


def _binom_half(k: int) -> float:
    out = 1.0
    for j in range(k):
        out *= (0.5 - j) / (j + 1)
    return out


def sqrt(value):
    """Square root for jets and plain numbers alike."""
    if isinstance(value, Jet):
        return value.sqrt()
    value = np.asarray(value, dtype=float)
    if np.any(~(value > 0)):
        raise DomainError("sqrt of a non-positive number")
    return np.sqrt(value)


@dataclass(frozen=True)
class PhasePoint:
    """Point(s) ``(x, y)`` of the slit tangent space.

    ``x`` and ``y`` have shape ``(..., n)``; leading axes index a batch of
    sample points.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        if x.ndim == 0 or x.shape != y.shape:
            raise ValueError(f"x and y must have equal shape (..., n); got {x.shape}, {y.shape}")
        if x.shape[-1] < 2:
            raise ValueError("dimension n must be at least 2")
        if np.any(np.all(y == 0, axis=-1)):
            raise DomainError("y = 0 is not in the slit tangent space")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.x.shape[:-1]

    def __len__(self):
        return int(np.prod(self.batch_shape))

    def __getitem__(self, idx) -> "PhasePoint":
        return PhasePoint(self.x[idx], self.y[idx])

    def scaled(self, lam: float) -> "PhasePoint":
        return PhasePoint(self.x, lam * self.y)


def lift(p: PhasePoint, order: int):
    """Seed jet variables ``(xs, ys)`` at ``p``; variable ``k`` is x_k, ``n + k`` is y_k."""
    n = p.n
    dim = 2 * n
    xs = [Jet.variable(p.x[..., k], k, dim, order) for k in range(n)]
    ys = [Jet.variable(p.y[..., k], n + k, dim, order) for k in range(n)]
    return xs, ys


Evaluator = Callable[[Sequence[Jet], Sequence[Jet]], object]


@dataclass(frozen=True)
class ScalarField:
    """A pure function on the slit tangent space evaluated through jets.

    ``fn(xs, ys)`` receives lifted coordinate jets and returns a jet (or a
    constant).  ``degree`` is the declared homogeneity degree in ``y``;
    ``domain(x, y)`` returns a boolean mask of admissible points.
    """

    fn: Evaluator
    degree: Optional[int] = None
    domain: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = "f"
    n: Optional[int] = None

    def __call__(self, xs: Sequence[Jet], ys: Sequence[Jet]) -> Jet:
        out = self.fn(xs, ys)
        if isinstance(out, Jet):
            return out
        ref = (xs or ys)[0]
        value = np.broadcast_to(np.asarray(out, dtype=float), ref.batch_shape)
        return Jet.constant(value, ref.dim, ref.order)

    def in_domain(self, p: PhasePoint) -> np.ndarray:
        if self.domain is None:
            return np.ones(p.batch_shape, dtype=bool)
        return np.asarray(self.domain(p.x, p.y), dtype=bool)

    # field algebra, used for candidates such as c*F and a(x)*F
    def _combine(self, other, op, degree, name):
        if isinstance(other, ScalarField):
            dom = _and_domain(self.domain, other.domain)
            return ScalarField(lambda xs, ys: op(self(xs, ys), other(xs, ys)), degree, dom, name, self.n or other.n)
        return ScalarField(lambda xs, ys: op(self(xs, ys), other), degree, self.domain, name, self.n)

    def __add__(self, other):
        deg = self.degree if _same_degree(self, other) else None
        return self._combine(other, lambda a, b: a + b, deg, f"({self.name} + {_nm(other)})")

    def __sub__(self, other):
        deg = self.degree if _same_degree(self, other) else None
        return self._combine(other, lambda a, b: a - b, deg, f"({self.name} - {_nm(other)})")

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            deg = None if self.degree is None or other.degree is None else self.degree + other.degree
        else:
            deg = self.degree
        return self._combine(other, lambda a, b: a * b, deg, f"{self.name}*{_nm(other)}")

    def __rmul__(self, other):
        return ScalarField(lambda xs, ys: other * self(xs, ys), self.degree, self.domain, f"{other}*{self.name}", self.n)

    def __truediv__(self, other):
        if isinstance(other, ScalarField):
            deg = None if self.degree is None or other.degree is None else self.degree - other.degree
        else:
            deg = self.degree
        return self._combine(other, lambda a, b: a / b, deg, f"{self.name}/{_nm(other)}")

    def __neg__(self):
        return ScalarField(lambda xs, ys: -self(xs, ys), self.degree, self.domain, f"-{self.name}", self.n)


def _nm(obj):
    return obj.name if isinstance(obj, ScalarField) else repr(obj)


def _same_degree(f, g):
    if isinstance(g, ScalarField):
        return f.degree is not None and f.degree == g.degree
    return f.degree == 0


def _and_domain(d1, d2):
    if d1 is None:
        return d2
    if d2 is None:
        return d1
    return lambda x, y: np.logical_and(d1(x, y), d2(x, y))


def jet_eval(f: ScalarField, p: PhasePoint, order: int) -> Jet:
    """Taylor jet of ``f`` at ``p`` to the given order."""
    if order < 0:
        raise ValueError("order must be >= 0")
    if not np.all(f.in_domain(p)):
        raise DomainError(f"point outside the domain of {f.name}")
    xs, ys = lift(p, order)
    return f(xs, ys)


def partial(f: ScalarField, p: PhasePoint, multi_index: Sequence[int]) -> np.ndarray:
    """Exact mixed partial of ``f`` at ``p``; ``multi_index`` has length 2n (x first)."""
    mi = tuple(int(k) for k in multi_index)
    if len(mi) != 2 * p.n:
        raise ValueError(f"multi-index must have length {2 * p.n}")
    return jet_eval(f, p, sum(mi)).derivative(mi)


def multi_index(n: int, *names: str) -> tuple:
    """Build an exponent tuple from variable names, e.g. ``multi_index(2, "x1", "y2")``."""
    mi = [0] * (2 * n)
    for name in names:
        k = int(name[1:]) - 1
        if name[0] not in "xy" or not 0 <= k < n:
            raise ValueError(f"bad variable name {name!r}")
        mi[k + (n if name[0] == "y" else 0)] += 1
    return tuple(mi)


# 1-D central stencils (offsets, weights) for the m-th derivative, O(h^2)
_STENCILS = {
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
}
_DEFAULT_STEP = {1: 1e-4, 2: 1e-3, 3: 5e-3}


def fd_oracle(f: ScalarField, p: PhasePoint, multi_index: Sequence[int], step: Optional[float] = None) -> np.ndarray:
    """Central finite-difference estimate of a mixed partial with one Richardson level.

    Independent of the jet arithmetic: ``f`` is only ever evaluated at order 0.
    The per-variable step is ``step * (1 + |z_v|)``.
    """
    mi = tuple(int(k) for k in multi_index)
    n = p.n
    if len(mi) != 2 * n:
        raise ValueError(f"multi-index must have length {2 * n}")
    total = sum(mi)
    if total > 3 or any(k > 3 for k in mi):
        raise ValueError("fd_oracle supports total degree <= 3")
    z0 = np.concatenate([p.x, p.y], axis=-1)
    if total == 0:
        return jet_eval(f, p, 0).value
    base = _DEFAULT_STEP[total] if step is None else step
    h = base * (1.0 + np.abs(z0))

    def estimate(hh):
        axes = [(v, m) for v, m in enumerate(mi) if m]
        pts, wts = [], []
        for combo in itertools.product(*(range(len(_STENCILS[m][0])) for _, m in axes)):
            dz = np.zeros_like(z0)
            w = 1.0
            for (v, m), s in zip(axes, combo):
                off, wt = _STENCILS[m]
                dz[..., v] = off[s] * hh[..., v]
                w *= wt[s]
            pts.append(z0 + dz)
            wts.append(w)
        pts = np.stack(pts)
        q = PhasePoint(pts[..., :n], pts[..., n:])
        if not np.all(f.in_domain(q)):
            raise DomainError("finite-difference stencil leaves the domain")
        vals = jet_eval(f, q, 0).value
        acc = np.tensordot(np.asarray(wts), vals, axes=1)
        denom = np.ones(z0.shape[:-1])
        for v, m in axes:
            denom = denom * hh[..., v] ** m
        return acc / denom

    d1 = estimate(h)
    d2 = estimate(h / 2)
    return (4.0 * d2 - d1) / 3.0


def euler_residual(f: ScalarField, p: PhasePoint, degree: int) -> np.ndarray:
    """``sum_i y^i df/dy^i - degree * f`` at each point."""
    jet = jet_eval(f, p, 1)
    n = p.n
    lhs = sum(p.y[..., i] * jet.coefficient(_unit(2 * n, n + i)) for i in range(n))
    return lhs - degree * jet.value


def _unit(dim, v):
    e = [0] * dim
    e[v] = 1
    return tuple(e)
