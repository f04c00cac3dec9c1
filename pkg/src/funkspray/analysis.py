"""Residual evaluators and detectors built on :mod:`funkspray.geometry`.

Every report keeps its samples and (when known) the RNG seed that produced
them, exposes ``summary()`` for scalar statistics and ``rows()`` for the
per-sample data, both JSON-ready.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateInput, DomainError, PreconditionError
from .geometry import (
    LocalGeometry,
    Spray,
    _matrix_values,
    _values,
    check_homogeneity,
    geodesic_spray,
    projective_deform,
)
from .jets import PhasePoint, ScalarField, jet_eval

KAPPA_FLOOR = 0.01
FIBER_DIRECTIONS = 8
FIBER_VAR_TOL = 1e-8
BASE_STEP = 1e-4


def _norm(a: np.ndarray, axes=(-1,)) -> np.ndarray:
    return np.sqrt(np.sum(a * a, axis=axes))


def _sup(a) -> float:
    a = np.asarray(a, dtype=float)
    return float(np.max(a)) if a.size else 0.0


def _rms(a) -> float:
    a = np.asarray(a, dtype=float)
    return float(np.sqrt(np.mean(a * a))) if a.size else 0.0


def _sample_rows(samples: PhasePoint) -> list:
    return [{"x": xi.tolist(), "y": yi.tolist()} for xi, yi in zip(samples.x, samples.y)]


def _flat(samples: PhasePoint) -> PhasePoint:
    n = samples.n
    return PhasePoint(samples.x.reshape(-1, n), samples.y.reshape(-1, n))


@dataclass
class FunkResidualReport:
    residuals: np.ndarray
    P_values: np.ndarray
    dJP: np.ndarray
    samples: PhasePoint
    seed: Optional[int] = None

    @property
    def norms(self) -> np.ndarray:
        return _norm(self.residuals)

    @property
    def sup_norm(self) -> float:
        return _sup(self.norms)

    @property
    def rms(self) -> float:
        return _rms(self.norms)

    @property
    def scale(self) -> float:
        """Sup of ``|P| * |d_J P|``, the size of the quadratic term."""
        return _sup(np.abs(self.P_values) * _norm(self.dJP))

    @property
    def count(self) -> int:
        return len(self.norms)

    def summary(self) -> dict:
        return {
            "sup_norm": self.sup_norm,
            "rms": self.rms,
            "relative_scale": self.scale,
            "sample_count": self.count,
            "seed": self.seed,
        }

    def rows(self) -> list:
        rows = _sample_rows(self.samples)
        for row, r, nr in zip(rows, self.residuals, self.norms):
            row["residual"] = r.tolist()
            row["norm"] = float(nr)
        return rows


def funk_residual(S: Spray, P: ScalarField, samples: PhasePoint, seed: Optional[int] = None) -> FunkResidualReport:
    """Evaluate ``d_h P - P d_J P`` at every sample."""
    samples = _flat(samples)
    check_homogeneity(P, 1, samples)
    geo = LocalGeometry(S, samples, 1)
    Pj = geo.field(P)
    dh = _values(geo.dh(Pj))
    dJ = _values(geo.dJ(Pj))
    res = dh - Pj.value[:, None] * dJ
    return FunkResidualReport(res, np.asarray(Pj.value), dJ, samples, seed)


@dataclass
class IsotropyReport:
    rho: np.ndarray
    alpha: np.ndarray
    residual: np.ndarray
    consistency: np.ndarray  # alpha(y) - rho, zero when Phi(S) = 0
    samples: PhasePoint
    seed: Optional[int] = None

    def summary(self) -> dict:
        return {
            "residual_sup": _sup(self.residual),
            "residual_rms": _rms(self.residual),
            "rho_min": float(np.min(self.rho)),
            "rho_max": float(np.max(self.rho)),
            "consistency_sup": _sup(np.abs(self.consistency)),
            "sample_count": len(self.rho),
            "seed": self.seed,
        }

    def rows(self) -> list:
        rows = _sample_rows(self.samples)
        for row, r, a, e in zip(rows, self.rho, self.alpha, self.residual):
            row.update(rho=float(r), alpha=a.tolist(), residual=float(e))
        return rows


def _jacobi_values(S: Spray, samples: PhasePoint) -> np.ndarray:
    return _matrix_values(LocalGeometry(S, samples, 2).Phi)


def isotropy_decompose(S: Spray, samples: PhasePoint, seed: Optional[int] = None) -> IsotropyReport:
    """Fit ``Phi = rho J - alpha (x) C`` pointwise.

    ``rho = tr(Phi) / (n - 1)`` (using ``alpha(S) = rho``), and ``alpha`` is the
    least-squares solution of ``Phi^i_j - rho delta^i_j = -alpha_j y^i``.
    """
    samples = _flat(samples)
    n = samples.n
    if n < 2:
        raise DegenerateInput("isotropy needs n >= 2")
    Phi = _jacobi_values(S, samples)
    y = samples.y
    rho = np.trace(Phi, axis1=-2, axis2=-1) / (n - 1)
    M = Phi - rho[:, None, None] * np.eye(n)
    alpha = -np.einsum("si,sij->sj", y, M) / np.sum(y * y, axis=-1)[:, None]
    recon = rho[:, None, None] * np.eye(n) - y[:, :, None] * alpha[:, None, :]
    residual = _norm(Phi - recon, axes=(-2, -1))
    consistency = np.sum(alpha * y, axis=-1) - rho
    return IsotropyReport(rho, alpha, residual, consistency, samples, seed)


@dataclass
class FlagCurvatureReport:
    kappa: np.ndarray
    residual: np.ndarray
    samples: PhasePoint
    seed: Optional[int] = None

    @property
    def kappa_min(self) -> float:
        return float(np.min(self.kappa))

    @property
    def kappa_max(self) -> float:
        return float(np.max(self.kappa))

    def summary(self) -> dict:
        return {
            "kappa_min": self.kappa_min,
            "kappa_max": self.kappa_max,
            "kappa_mean": float(np.mean(self.kappa)),
            "residual_sup": _sup(self.residual),
            "sample_count": len(self.kappa),
            "seed": self.seed,
        }

    def rows(self) -> list:
        rows = _sample_rows(self.samples)
        for row, k, r in zip(rows, self.kappa, self.residual):
            row.update(kappa=float(k), residual=float(r))
        return rows


def flag_curvature(
    F: ScalarField, samples: PhasePoint, seed: Optional[int] = None, S: Optional[Spray] = None
) -> FlagCurvatureReport:
    """Extract ``kappa`` from ``Phi = kappa (F^2 J - F d_J F (x) C)`` and measure the misfit."""
    samples = _flat(samples)
    n = samples.n
    S = geodesic_spray(F, n) if S is None else S
    Phi = _jacobi_values(S, samples)
    Fj = jet_eval(F, samples, 1)
    Fv = np.asarray(Fj.value)
    Fy = np.stack([Fj.deriv(n + i).value for i in range(n)], axis=-1)
    kappa = np.trace(Phi, axis1=-2, axis2=-1) / ((n - 1) * Fv**2)
    model = (Fv**2)[:, None, None] * np.eye(n) - Fv[:, None, None] * samples.y[:, :, None] * Fy[:, None, :]
    residual = _norm(Phi - kappa[:, None, None] * model, axes=(-2, -1))
    return FlagCurvatureReport(kappa, residual, samples, seed)


@dataclass
class DeformationReport:
    direct: np.ndarray
    formula: np.ndarray
    abs_diff: np.ndarray
    rel_diff: np.ndarray
    samples: PhasePoint
    seed: Optional[int] = None

    def summary(self) -> dict:
        return {
            "abs_diff_sup": _sup(self.abs_diff),
            "rel_diff_sup": _sup(self.rel_diff),
            "sample_count": len(self.rel_diff),
            "seed": self.seed,
        }

    def rows(self) -> list:
        rows = _sample_rows(self.samples)
        for row, d, f, r in zip(rows, self.direct, self.formula, self.rel_diff):
            row.update(phi_direct=d.tolist(), phi_formula=f.tolist(), rel_diff=float(r))
        return rows


def verify_deformation(S: Spray, P: ScalarField, samples: PhasePoint, seed: Optional[int] = None) -> DeformationReport:
    """Compare the Jacobi endomorphism of ``S - 2PC`` computed two ways.

    Direct: :func:`jacobi` applied to the deformed spray.  Closed form::

        Phi + (P^2 - S(P)) J - (d_J(S(P) - P^2) + 3 (P d_J P - d_h P)) (x) C
    """
    samples = _flat(samples)
    n = samples.n
    deformed = projective_deform(S, P, samples)
    direct = _jacobi_values(deformed, samples)

    geo = LocalGeometry(S, samples, 2)
    Pj = geo.field(P)
    SP = geo.S_of(Pj)
    P2 = Pj * Pj
    dJX = _values(geo.dJ(SP - P2))
    dJP = _values(geo.dJ(Pj))
    dhP = _values(geo.dh(Pj))
    Pv = np.asarray(Pj.value)[:, None]
    phi = _matrix_values(geo.Phi)
    iso = (P2.value - SP.value)[:, None, None] * np.eye(n)
    beta = dJX + 3.0 * (Pv * dJP - dhP)
    c_term = samples.y[:, :, None] * beta[:, None, :]
    formula = phi + iso - c_term

    abs_diff = _norm(direct - formula, axes=(-2, -1))
    scale = np.maximum.reduce(
        [_norm(direct, (-2, -1)), _norm(formula, (-2, -1)), _norm(phi, (-2, -1)), _norm(iso, (-2, -1)), _norm(c_term, (-2, -1))]
    )
    rel = np.divide(abs_diff, scale, out=np.zeros_like(abs_diff), where=scale > 0)
    return DeformationReport(direct, formula, abs_diff, rel, samples, seed)


@dataclass
class ChainReport:
    dRP: np.ndarray
    dPhiP: np.ndarray
    dJ_P_over_F: np.ndarray
    funk: np.ndarray  # residual 1-forms d_h P - P d_J P
    F_dJF: np.ndarray  # F d_J F, for comparison with the Funk residual of a*F
    a: np.ndarray
    fiber_var: np.ndarray
    d_minus_inv_a: np.ndarray
    dJF: np.ndarray
    mismatch: np.ndarray
    kappa_min_abs: float
    samples: PhasePoint
    seed: Optional[int] = None
    tol: float = 1e-8
    a_has_zeros: bool = False

    @property
    def verdict(self) -> dict:
        funk_sup = _sup(_norm(self.funk))
        basic = bool(_sup(self.dJ_P_over_F) < self.tol and _sup(self.fiber_var) < FIBER_VAR_TOL)
        mism = self.mismatch[np.isfinite(self.mismatch)]
        return {
            "dRP_vanishes": bool(_sup(self.dRP) < self.tol),
            "dPhiP_vanishes": bool(_sup(self.dPhiP) < self.tol),
            "P_over_F_basic": basic,
            "funk_equation_holds": bool(funk_sup < self.tol),
            "basic_contradiction": bool(mism.size > 0 and np.min(mism) > self.tol),
            "a_has_zeros": self.a_has_zeros,
        }

    def summary(self) -> dict:
        mism = self.mismatch[np.isfinite(self.mismatch)]
        return {
            "kappa_min_abs": self.kappa_min_abs,
            "dRP_sup": _sup(self.dRP),
            "dPhiP_sup": _sup(self.dPhiP),
            "dJ_P_over_F_sup": _sup(self.dJ_P_over_F),
            "funk_sup": _sup(_norm(self.funk)),
            "a_min": float(np.min(self.a)),
            "a_max": float(np.max(self.a)),
            "fiber_var_sup": _sup(self.fiber_var),
            "mismatch_min": float(np.min(mism)) if mism.size else None,
            "mismatch_max": float(np.max(mism)) if mism.size else None,
            "verdict": self.verdict,
            "sample_count": len(self.a),
            "seed": self.seed,
        }

    def rows(self) -> list:
        rows = _sample_rows(self.samples)
        for s, row in enumerate(rows):
            row.update(
                dRP=float(self.dRP[s]),
                dPhiP=float(self.dPhiP[s]),
                dJ_P_over_F=float(self.dJ_P_over_F[s]),
                funk=self.funk[s].tolist(),
                a=float(self.a[s]),
                fiber_var=float(self.fiber_var[s]),
                mismatch=None if not np.isfinite(self.mismatch[s]) else float(self.mismatch[s]),
            )
        return rows


def fiber_directions(n: int, count: int = FIBER_DIRECTIONS) -> np.ndarray:
    """Fixed unit directions used to average 0-homogeneous quantities over a fibre."""
    if n == 2:
        t = 2.0 * np.pi * (np.arange(count) + 0.25) / count
        return np.stack([np.cos(t), np.sin(t)], axis=-1)
    rng = np.random.Generator(np.random.Philox(20240601))
    d = rng.normal(size=(count, n))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def fit_basic(P: ScalarField, F: ScalarField, x: np.ndarray, directions: np.ndarray):
    """Average ``P/F`` over fibre directions at each base point; returns (mean, variance)."""
    m, n = x.shape
    k = directions.shape[0]
    xx = np.repeat(x[:, None, :], k, axis=1)
    yy = np.broadcast_to(directions[None, :, :], (m, k, n))
    pts = PhasePoint(xx, yy)
    ratio = jet_eval(P, pts, 0).value / jet_eval(F, pts, 0).value
    return ratio.mean(axis=1), ratio.var(axis=1)


def obstruction_chain(
    F: ScalarField,
    P: ScalarField,
    samples: PhasePoint,
    seed: Optional[int] = None,
    tol: float = 1e-8,
    S: Optional[Spray] = None,
) -> ChainReport:
    """Evaluate each step of the non-existence argument for a candidate ``P``.

    Requires ``|kappa| > 0.01`` at every sample.  The report contains
    ``|d_R P|``, ``|d_Phi P|``, ``|d_J(P/F)|``, the fitted basic factor
    ``a = P/F`` with its fibre variance, and ``|d(-1/a) - d_J F|`` where
    ``d(-1/a)`` is taken by base-space central differences.
    """
    samples = _flat(samples)
    n = samples.n
    S = geodesic_spray(F, n) if S is None else S
    fc = flag_curvature(F, samples, seed, S)
    kmin = float(np.min(np.abs(fc.kappa)))
    if not kmin > KAPPA_FLOOR:
        raise PreconditionError(
            f"scalar flag curvature vanishes somewhere (min |kappa| = {kmin:.3g}); the obstruction chain does not apply"
        )
    check_homogeneity(P, 1, samples)

    geo = LocalGeometry(S, samples, 2)
    Pj = geo.field(P)
    Fj = geo.field(F)
    dRP = _norm(_matrix_values(geo.dR(Pj)), axes=(-2, -1))
    dPhiP = _norm(_values(geo.dPhi(Pj)))
    dJQ = _norm(_values(geo.dJ(Pj / Fj)))
    dJP = _values(geo.dJ(Pj))
    funk = _values(geo.dh(Pj)) - np.asarray(Pj.value)[:, None] * dJP
    dJF = _values(geo.dJ(Fj))
    F_dJF = np.asarray(Fj.value)[:, None] * dJF

    dirs = fiber_directions(n)
    a, var = fit_basic(P, F, samples.x, dirs)
    zero = np.abs(a) < 1e-12
    grad = np.full((len(a), n), np.nan)
    for k in range(n):
        e = np.zeros(n)
        e[k] = BASE_STEP
        ap, _ = fit_basic(P, F, samples.x + e, dirs)
        am, _ = fit_basic(P, F, samples.x - e, dirs)
        with np.errstate(divide="ignore", invalid="ignore"):
            grad[:, k] = (-1.0 / ap + 1.0 / am) / (2.0 * BASE_STEP)
    bad = zero | ~np.all(np.isfinite(grad), axis=-1)
    mismatch = _norm(np.where(bad[:, None], 0.0, grad - dJF))
    mismatch = np.where(bad, np.nan, mismatch)
    return ChainReport(
        dRP=dRP,
        dPhiP=dPhiP,
        dJ_P_over_F=dJQ,
        funk=funk,
        F_dJF=F_dJF,
        a=a,
        fiber_var=var,
        d_minus_inv_a=grad,
        dJF=dJF,
        mismatch=mismatch,
        kappa_min_abs=kmin,
        samples=samples,
        seed=seed,
        tol=tol,
        a_has_zeros=bool(np.any(bad)),
    )


IDENTITIES = ("Jh_anticommute", "hh_equals_R", "JPhi_equals_3R", "iS_R_equals_Phi")


@dataclass
class IdentityRow:
    field: str
    raw: dict  # identity -> sup of |residual|
    scaled: dict  # identity -> sup of |residual| / local scale


@dataclass
class IdentityTable:
    spray: str
    rows_: list = field(default_factory=list)
    samples: Optional[PhasePoint] = None
    seed: Optional[int] = None
    tol: float = 1e-8

    def worst(self) -> float:
        return max((v for r in self.rows_ for v in r.scaled.values()), default=0.0)

    def summary(self) -> dict:
        return {
            "spray": self.spray,
            "worst_scaled": self.worst(),
            "table": {r.field: r.scaled for r in self.rows_},
            "sample_count": len(self.samples) if self.samples is not None else 0,
            "seed": self.seed,
        }

    def rows(self) -> list:
        return [{"field": r.field, "raw": r.raw, "scaled": r.scaled} for r in self.rows_]


def _two(omega) -> np.ndarray:
    return _matrix_values(omega)


def _scaled_sup(res: np.ndarray, *terms: np.ndarray, axes) -> tuple:
    scale = 1.0 + np.max(np.stack([np.max(np.abs(t), axis=axes) for t in terms]), axis=0)
    raw = np.max(np.abs(res), axis=axes)
    return float(np.max(raw)), float(np.max(raw / scale))


def identity_suite(
    S: Spray, fields: Sequence[ScalarField], samples: PhasePoint, seed: Optional[int] = None
) -> IdentityTable:
    """Check the derivation identities used in the obstruction chain.

    For each field ``f``: ``d_J d_h f + d_h d_J f``, ``d_h d_h f - d_R f``,
    ``d_J d_Phi f + d_Phi d_J f - 3 d_R f`` and, when ``f`` is declared
    1-homogeneous, ``i_S d_R f - d_Phi f``.  Residuals are reported raw and
    divided by ``1 + max |term|`` per sample.
    """
    samples = _flat(samples)
    geo = LocalGeometry(S, samples, 3)
    table = IdentityTable(S.tag, samples=samples, seed=seed)
    mat = (-2, -1)
    for f in fields:
        fj = geo.field(f)
        dhf, dJf = geo.dh(fj), geo.dJ(fj)
        dRf = _two(geo.dR(fj))
        a1, b1 = _two(geo.dJ1(dhf)), _two(geo.dh1(dJf))
        hh = _two(geo.dh1(dhf))
        dPhif = geo.dPhi(fj)
        a3, b3 = _two(geo.dJ1(dPhif)), _two(geo.dPhi1(dJf))
        raw, scaled = {}, {}
        raw["Jh_anticommute"], scaled["Jh_anticommute"] = _scaled_sup(a1 + b1, a1, b1, axes=mat)
        raw["hh_equals_R"], scaled["hh_equals_R"] = _scaled_sup(hh - dRf, hh, dRf, axes=mat)
        raw["JPhi_equals_3R"], scaled["JPhi_equals_3R"] = _scaled_sup(a3 + b3 - 3.0 * dRf, a3, b3, 3.0 * dRf, axes=mat)
        if f.degree == 1:
            iS = _values(geo.iS2(geo.dR(fj)))
            dP = _values(dPhif)
            raw["iS_R_equals_Phi"], scaled["iS_R_equals_Phi"] = _scaled_sup(iS - dP, iS, dP, axes=(-1,))
        table.rows_.append(IdentityRow(f.name, raw, scaled))
    return table
