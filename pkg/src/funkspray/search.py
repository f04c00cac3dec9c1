"""Least-squares search for Funk functions in a rational 1-homogeneous family.

The ansatz is ``P(x, y) = sum_i (u_i + V_ij x^j) y^i / (1 + w . x)``, linear in
``y`` over a ``y``-free denominator, hence exactly 1-homogeneous.  It contains
the flat-space Funk function ``y1 / (1 - x1)``.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .analysis import funk_residual
from .catalog import Domain
from .errors import AnsatzDomainError
from .geometry import Spray, connection
from .jets import Jet, PhasePoint, ScalarField
from .sampling import draw_samples, rng_for

log = logging.getLogger(__name__)

DENOMINATOR_FLOOR = 0.1
PENALTY = 1e3
VALIDATION_STREAM = 1
SEARCH_DOMAIN = Domain("ball", 0.6)


@dataclass(frozen=True)
class Ansatz:
    n: int

    @property
    def size(self) -> int:
        return 2 * self.n + self.n * self.n

    def split(self, theta):
        n = self.n
        theta = np.asarray(theta)
        return theta[:n], theta[n : n + n * n].reshape(n, n), theta[n + n * n :]

    def pack(self, u, V, w) -> np.ndarray:
        return np.concatenate([np.ravel(u), np.ravel(V), np.ravel(w)]).astype(float)

    def denominator(self, theta, x: np.ndarray) -> np.ndarray:
        _, _, w = self.split(theta)
        return 1.0 + np.asarray(x) @ w

    def check(self, theta, x: Optional[np.ndarray] = None, radius: Optional[float] = None) -> None:
        """Raise :class:`AnsatzDomainError` if the denominator can drop to the floor."""
        _, _, w = self.split(theta)
        if radius is not None and 1.0 - radius * np.linalg.norm(w) <= DENOMINATOR_FLOOR:
            raise AnsatzDomainError(f"ansatz denominator reaches {DENOMINATOR_FLOOR} inside |x| <= {radius}")
        if x is not None and np.any(self.denominator(theta, x) <= DENOMINATOR_FLOOR):
            raise AnsatzDomainError(f"ansatz denominator <= {DENOMINATOR_FLOOR} at a sample")

    def field(self, theta) -> ScalarField:
        u, V, w = (np.array(a) for a in self.split(theta))
        n = self.n

        def fn(xs, ys):
            num = sum(((u[i] + sum((V[i, j] * xs[j] for j in range(n)), start=0.0)) * ys[i] for i in range(n)), start=0.0)
            den = 1.0 + sum((w[k] * xs[k] for k in range(n)), start=0.0)
            return num / den

        def domain(x, y):
            return 1.0 + np.asarray(x) @ w > DENOMINATOR_FLOOR

        return ScalarField(fn, 1, domain, "ansatz", n)


def _residual_jets(ansatz: Ansatz, theta, x: np.ndarray, y: np.ndarray, N: np.ndarray):
    """Funk residual components as first-order jets in the parameters.

    Derivatives in ``(x, y)`` are taken in closed form, so only the parameter
    dependence is carried by the jets; their linear coefficients are the
    Jacobian rows.
    """
    n = ansatz.n
    p = ansatz.size
    th = [Jet.variable(t, k, p, 1) for k, t in enumerate(np.asarray(theta, dtype=float))]
    u = th[:n]
    V = [th[n + i * n : n + (i + 1) * n] for i in range(n)]
    w = th[n + n * n :]
    c = [u[i] + sum((V[i][j] * x[:, j] for j in range(n)), start=0.0) for i in range(n)]
    num = sum((c[i] * y[:, i] for i in range(n)), start=0.0)
    inv = 1.0 / (1.0 + sum((w[k] * x[:, k] for k in range(n)), start=0.0))
    P = num * inv
    Py = [ci * inv for ci in c]
    Px = [sum((V[i][k] * y[:, i] for i in range(n)), start=0.0) * inv - num * w[k] * inv * inv for k in range(n)]
    res = []
    for k in range(n):
        r = Px[k] - sum((Py[j] * N[:, j, k] for j in range(n)), start=0.0) - P * Py[k]
        res.append(r)
    penalty = np.sqrt(PENALTY) * (u[0] - 1.0)
    return res, penalty


def _unpack(res, penalty, p: int):
    m = res[0].batch_shape[0]
    n = len(res)
    r = np.empty(m * n + 1)
    J = np.empty((m * n + 1, p))
    for k, jet in enumerate(res):
        c = np.broadcast_to(jet.coef, (p + 1, m))
        r[k:m * n:n] = c[0]
        J[k:m * n:n] = c[1:].T
    r[-1] = penalty.value
    J[-1] = penalty.coef[1:]
    return r, J


def objective(S: Spray, theta, samples: PhasePoint, N: Optional[np.ndarray] = None, jacobian: bool = False):
    """Stacked Funk residuals of ``P_theta`` plus the normalisation penalty.

    Returns ``(value, residual_vector)`` (and the Jacobian when requested).
    The last residual entry is ``sqrt(1e3) * (P_theta(0, e1) - 1)``, which
    keeps the search away from the trivial solution ``P = 0``.
    """
    ansatz = Ansatz(samples.n)
    ansatz.check(theta, samples.x)
    if N is None:
        N = connection(S, samples).N
    res, pen = _residual_jets(ansatz, theta, samples.x, samples.y, N)
    r, J = _unpack(res, pen, ansatz.size)
    value = float(r @ r)
    if jacobian:
        return value, r, J
    return value, r


@dataclass
class LMTrace:
    theta: np.ndarray
    cost: float
    iterations: int
    accepted: int
    history: list
    status: str


def levenberg_marquardt(fun, theta0, max_iter=200, mu0=1e-3, gtol=1e-12) -> LMTrace:
    """Damped Gauss-Newton with multiplicative damping updates.

    ``fun(theta)`` returns ``(residuals, jacobian)`` and may raise
    :class:`AnsatzDomainError`, which counts as a rejected step.  Damping is
    multiplied by 10 on rejection and by 0.5 on acceptance; only steps that
    strictly decrease the cost are accepted.
    """
    theta = np.asarray(theta0, dtype=float)
    r, J = fun(theta)
    cost = float(r @ r)
    mu = mu0
    history = [cost]
    accepted = 0
    status = "max_iter"
    it = 0
    while it < max_iter:
        g = J.T @ r
        if np.linalg.norm(g) < gtol:
            status = "gradient"
            break
        if mu > 1e20:
            status = "stalled"
            break
        A = J.T @ J
        step = np.linalg.solve(A + mu * np.eye(len(theta)), -g)
        it += 1
        trial = theta + step
        try:
            r_new, J_new = fun(trial)
        except AnsatzDomainError:
            mu *= 10.0
            continue
        new_cost = float(r_new @ r_new)
        if new_cost < cost:
            theta, r, J, cost = trial, r_new, J_new, new_cost
            mu *= 0.5
            accepted += 1
            history.append(cost)
        else:
            mu *= 10.0
    return LMTrace(theta, cost, it, accepted, history, status)


@dataclass(frozen=True)
class SearchConfig:
    restarts: int = 16
    max_iter: int = 200
    seed: int = 42
    samples: int = 200
    validation_samples: int = 200
    radius: float = SEARCH_DOMAIN.size
    mu0: float = 1e-3
    gtol: float = 1e-12


@dataclass
class SearchResult:
    theta: list
    train_rms: float
    val_sup: float
    val_rms: float
    restart: int
    iterations: int
    accepted: int
    status: str
    seed: int
    no_progress: bool = False
    per_restart: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def initial_theta(ansatz: Ansatz, rng: np.random.Generator, radius: float, x: np.ndarray) -> np.ndarray:
    """Uniform in [-0.5, 0.5] per entry, resampled until the denominator is admissible."""
    for _ in range(1000):
        theta = rng.uniform(-0.5, 0.5, size=ansatz.size)
        try:
            ansatz.check(theta, x, radius)
            return theta
        except AnsatzDomainError:
            continue
    raise AnsatzDomainError("could not draw an admissible initial parameter vector")


def _norm_rows(res: np.ndarray, n: int) -> np.ndarray:
    return np.sqrt(np.sum(res[:-1].reshape(-1, n) ** 2, axis=1))


def search_funk(S: Spray, config: SearchConfig = SearchConfig(), n: Optional[int] = None) -> SearchResult:
    """Multi-start Levenberg-Marquardt fit of the ansatz to the Funk equation.

    Training and validation samples come from disjoint Philox streams.  The
    result with the smallest validation RMS wins (ties go to the lower
    restart index).
    """
    n = n or S.n
    if n is None:
        raise ValueError("dimension required")
    ansatz = Ansatz(n)
    domain = Domain("ball", config.radius)
    train = draw_samples(domain, n, config.samples, config.seed)
    val = draw_samples(domain, n, config.validation_samples, config.seed, VALIDATION_STREAM)
    N_train = connection(S, train).N

    def fun(theta):
        ansatz.check(theta, train.x, config.radius)
        _, r, J = objective(S, theta, train, N_train, jacobian=True)
        return r, J

    results = []
    for k in range(config.restarts):
        rng = rng_for(config.seed, 2, k)
        theta0 = initial_theta(ansatz, rng, config.radius, train.x)
        trace = levenberg_marquardt(fun, theta0, config.max_iter, config.mu0, config.gtol)
        r, _ = fun(trace.theta)
        train_rms = float(np.sqrt(np.mean(_norm_rows(r, n) ** 2)))
        rep = funk_residual(S, ansatz.field(trace.theta), val)
        results.append((rep.rms, k, trace, train_rms, rep.sup_norm))
        log.debug("restart %d: status=%s val_rms=%.3e", k, trace.status, rep.rms)

    best = min(results, key=lambda t: (t[0], t[1]))
    val_rms, k, trace, train_rms, val_sup = best
    no_progress = all(t[2].accepted == 0 for t in results)
    if no_progress:
        log.warning("no restart accepted a single step")
    per_restart = [
        {"restart": t[1], "val_rms": t[0], "train_rms": t[3], "iterations": t[2].iterations,
         "accepted": t[2].accepted, "status": t[2].status}
        for t in results
    ]
    return SearchResult(
        theta=trace.theta.tolist(),
        train_rms=train_rms,
        val_sup=val_sup,
        val_rms=val_rms,
        restart=k,
        iterations=trace.iterations,
        accepted=trace.accepted,
        status=trace.status,
        seed=config.seed,
        no_progress=no_progress,
        per_restart=per_restart,
    )
