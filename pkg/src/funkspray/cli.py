"""Command-line front end: ``funkspray <command> [options]``.

Commands: analyze, funk-check, deform, identities, chain, search, catalog.
Exit codes: 0 success, 1 usage/parse error, 2 numerical failure, 3 assertion
failure (with ``--assert``).
"""
from __future__ import annotations

import argparse
import configparser
import json
import math
import re
import sys
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import __version__
from . import catalog as cat
from .analysis import (
    flag_curvature,
    funk_residual,
    identity_suite,
    isotropy_decompose,
    obstruction_chain,
    verify_deformation,
)
from .catalog import Domain
from .errors import CompileError, FunkSprayError, ParseError
from .expr import compile as compile_expr, free_vars, mentions_F, parse
from .geometry import LocalGeometry, Spray, _values, check_homogeneity, geodesic_residual, geodesic_spray, metric_tensor
from .jets import ScalarField, jet_eval
from .sampling import draw_samples
from .search import SEARCH_DOMAIN, SearchConfig, search_funk

COMMANDS = ("analyze", "funk-check", "deform", "identities", "chain", "search", "catalog")
MAX_ROWS = 1000

DEFAULT_TOLERANCES = {
    "geodesic": 1e-9,
    "kappa": 1e-8,
    "flag": 1e-8,
    "isotropy": 1e-8,
    "funk": 1e-8,
    "deformation": 1e-7,
    "identity": 1e-8,
    "chain": 1e-8,
}

# (expression, declared degree); the last one is deliberately 2-homogeneous
DEFAULT_FIELDS = (("y1", 1), ("x1*y2 + F", 1), ("x1*y1*y2 + x2^2*y1^2", 2))


class UsageError(FunkSprayError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str = "analyze"
    metric: Optional[str] = None
    metric_expr: Optional[str] = None
    metric_degree: int = 1
    candidate: Optional[str] = None
    candidate_expr: Optional[str] = None
    c: float = 1.0
    a: str = "1"
    n: int = 2
    samples: int = 200
    seed: int = 42
    domain: Optional[str] = None
    tolerances: dict = field(default_factory=dict)
    fields: tuple = ()
    restarts: int = 16
    max_iter: int = 200
    json_path: Optional[str] = None
    assert_mode: bool = False

    def validate(self) -> "RunConfig":
        if not 2 <= self.n <= 4:
            raise UsageError(f"--n must be in [2, 4], got {self.n}")
        if self.samples < 1:
            raise UsageError("--samples must be >= 1")
        if self.metric and self.metric_expr:
            raise UsageError("give either --metric or --metric-expr, not both")
        if self.candidate and self.candidate_expr:
            raise UsageError("give either --candidate or --candidate-expr, not both")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES) - {"search_rms"}
        if unknown:
            raise UsageError(f"unknown tolerance name(s): {', '.join(sorted(unknown))}")
        return self

    def tol(self, name: str) -> Optional[float]:
        return self.tolerances.get(name, DEFAULT_TOLERANCES.get(name))

    def echo(self) -> dict:
        out = asdict(self)
        out.pop("json_path")
        out["fields"] = list(self.fields)
        out["tolerances"] = {k: self.tol(k) for k in sorted(set(DEFAULT_TOLERANCES) | set(self.tolerances))}
        return out


# config sources ---------------------------------------------------------------

_FILE_KEYS = {
    "metric": {
        "name": ("metric", str),
        "expr": ("metric_expr", str),
        "degree": ("metric_degree", int),
        "candidate": ("candidate", str),
        "candidate_expr": ("candidate_expr", str),
        "c": ("c", float),
        "a": ("a", str),
        "n": ("n", int),
    },
    "sampling": {
        "samples": ("samples", int),
        "seed": ("seed", int),
        "domain": ("domain", str),
        "restarts": ("restarts", int),
        "max_iter": ("max_iter", int),
    },
}


def read_config_file(path: str) -> dict:
    """Read ``[metric]``, ``[sampling]`` and ``[tolerances]`` sections."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    values: dict = {}
    for section, keys in _FILE_KEYS.items():
        if section not in parser:
            continue
        for key, raw in parser[section].items():
            if key not in keys:
                raise UsageError(f"unknown key {key!r} in [{section}]")
            attr, conv = keys[key]
            try:
                values[attr] = conv(raw)
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {raw!r}") from exc
    if "tolerances" in parser:
        values["tolerances"] = {k: _float(v) for k, v in parser["tolerances"].items()}
    for section in parser.sections():
        if section not in _FILE_KEYS and section != "tolerances":
            raise UsageError(f"unknown section [{section}]")
    return values


def _float(text: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise UsageError(f"not a number: {text!r}") from exc


_DOMAIN_PART = re.compile(r"^\s*([xy])\s*:\s*(box|ball|annulus)\s*\(([^)]*)\)\s*$")


def parse_domain(text: str, default: Domain) -> Domain:
    """Parse ``"x:box(1);y:annulus(0.5,2)"`` or ``"x:ball(0.6)"``; missing parts keep defaults."""
    dom = default
    for part in filter(None, (p.strip() for p in text.split(";"))):
        m = _DOMAIN_PART.match(part)
        if not m:
            raise UsageError(f"bad --domain part {part!r}")
        var, kind, args = m.groups()
        nums = [_float(a) for a in args.split(",") if a.strip()]
        if var == "x" and kind in ("box", "ball") and len(nums) == 1 and nums[0] > 0:
            dom = replace(dom, kind=kind, size=nums[0])
        elif var == "y" and kind == "annulus" and len(nums) == 2 and 0 < nums[0] <= nums[1]:
            dom = replace(dom, y_min=nums[0], y_max=nums[1])
        else:
            raise UsageError(f"bad --domain part {part!r}")
    return dom


# building objects from the config --------------------------------------------------

@dataclass
class Setup:
    spray: Spray
    F: Optional[ScalarField]
    P: Optional[ScalarField]
    domain: Domain
    kappa: Optional[float]


def _metric_field(cfg: RunConfig) -> tuple:
    """Returns (F or None, spray, domain, documented kappa)."""
    n = cfg.n
    if cfg.metric_expr:
        ast = parse(cfg.metric_expr, n, allow_F=False)
        F = compile_expr(ast, n=n, degree=cfg.metric_degree, name=cfg.metric_expr)
        return F, geodesic_spray(F, n), cat.BOX, None
    name = cfg.metric or "euclidean"
    if name in cat.SPRAYS:
        F = cat.euclidean(n) if name == "flat" else None
        kappa = cat.SPRAYS[name].kappa
        return F, cat.spray(name, n), cat.SPRAYS[name].domain, kappa
    if name not in cat.METRICS:
        raise UsageError(f"unknown metric {name!r}; see `funkspray catalog`")
    F = cat.metric(name, n)
    entry = cat.METRICS[name]
    return F, geodesic_spray(F, n), entry.domain, entry.kappa


def _basic_function(cfg: RunConfig) -> ScalarField:
    ast = parse(cfg.a, cfg.n, allow_F=False)
    if any(kind == "y" for kind, _ in free_vars(ast)):
        raise UsageError("--a must depend on x only")
    return compile_expr(ast, n=cfg.n, degree=0, name=cfg.a)


def _candidate(cfg: RunConfig, F: Optional[ScalarField]) -> tuple:
    n = cfg.n
    if cfg.candidate_expr:
        ast = parse(cfg.candidate_expr, n, allow_F=True)
        try:
            return compile_expr(ast, F, n=n, degree=1, name=cfg.candidate_expr), None
        except CompileError as exc:
            raise UsageError(f"{exc} (the selected metric has no Finsler function)") from exc
    name = cfg.candidate
    if name is None:
        return None, None
    if name not in cat.CANDIDATES:
        raise UsageError(f"unknown candidate {name!r}; see `funkspray catalog`")
    entry = cat.CANDIDATES[name]
    if name in ("cF", "aF"):
        if F is None:
            raise UsageError(f"candidate {name} needs a metric with a Finsler function")
        if name == "cF":
            return cat.scaled(F, cfg.c), None
        return cat.base_scaled(F, _basic_function(cfg)), None
    return entry.build(n), entry.domain


def build(cfg: RunConfig) -> Setup:
    F, S, domain, kappa = _metric_field(cfg)
    P, cand_domain = _candidate(cfg, F)
    if cand_domain is not None:
        domain = domain.intersect(cand_domain)
    if cfg.domain:
        domain = parse_domain(cfg.domain, domain)
    return Setup(S, F, P, domain, kappa)


def _test_fields(cfg: RunConfig, F: Optional[ScalarField], P: Optional[ScalarField]) -> list:
    """User fields (``--field-expr``, declared 1-homogeneous) or the defaults, plus the candidate."""
    sources = [(src, 1) for src in cfg.fields] if cfg.fields else DEFAULT_FIELDS
    out = []
    for src, deg in sources:
        ast = parse(src, cfg.n, allow_F=True)
        if F is None and mentions_F(ast):
            if cfg.fields:
                raise UsageError(f"field {src!r} uses F but the selected spray has no Finsler function")
            continue
        out.append(compile_expr(ast, F, n=cfg.n, degree=deg, name=src))
    if P is not None:
        out.append(P)
    return out


# reports --------------------------------------------------------------------------------

def _clean(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats to JSON values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _check(name: str, value: float, tol: Optional[float], passed: Optional[bool] = None) -> dict:
    if passed is None:
        passed = value is not None and tol is not None and value <= tol
    return {"name": name, "value": value, "tol": tol, "passed": bool(passed)}


def cmd_analyze(cfg: RunConfig, st: Setup, samples) -> tuple:
    summary, checks, rows = {}, [], []
    iso = isotropy_decompose(st.spray, samples, cfg.seed)
    summary["isotropy"] = iso.summary()
    rows = iso.rows()
    if st.F is not None:
        F = st.F
        check_homogeneity(F, 1, samples)
        g = metric_tensor(F, samples)
        summary["metric_condition_max"] = float(np.max(g.condition))
        geo = LocalGeometry(st.spray, samples, 1)
        dhF = _values(geo.dh(geo.field(F)))
        gres = geodesic_residual(F, samples, st.spray)
        summary["dhF_sup"] = float(np.max(np.abs(dhF)))
        summary["geodesic_residual_sup"] = float(np.max(np.abs(gres)))
        checks.append(_check("dhF", summary["dhF_sup"], cfg.tol("geodesic")))
        checks.append(_check("geodesic_spray", summary["geodesic_residual_sup"], cfg.tol("geodesic")))
        fc = flag_curvature(F, samples, cfg.seed, st.spray)
        summary["flag_curvature"] = fc.summary()
        for row, k, r in zip(rows, fc.kappa, fc.residual):
            row.update(kappa=float(k), flag_residual=float(r))
        if st.kappa is not None:
            dev = max(abs(fc.kappa_min - st.kappa), abs(fc.kappa_max - st.kappa))
            summary["kappa_documented"] = st.kappa
            checks.append(_check("kappa", dev, cfg.tol("kappa")))
            checks.append(_check("flag_residual", summary["flag_curvature"]["residual_sup"], cfg.tol("flag")))
        F2 = np.asarray(jet_eval(F, samples, 0).value) ** 2
        summary["rho_minus_kappa_F2_sup"] = float(np.max(np.abs(iso.rho - fc.kappa * F2)))
    if st.kappa is not None or st.F is None:
        # isotropic sprays (documented constant curvature, or catalog sprays)
        checks.append(_check("isotropy_residual", summary["isotropy"]["residual_sup"], cfg.tol("isotropy")))
    return summary, checks, rows


def _need_candidate(st: Setup, command: str):
    if st.P is None:
        raise UsageError(f"{command} needs --candidate or --candidate-expr")


def cmd_funk_check(cfg, st, samples):
    _need_candidate(st, "funk-check")
    rep = funk_residual(st.spray, st.P, samples, cfg.seed)
    summary = rep.summary()
    return summary, [_check("funk_residual", rep.sup_norm, cfg.tol("funk"))], rep.rows()


def cmd_deform(cfg, st, samples):
    _need_candidate(st, "deform")
    rep = verify_deformation(st.spray, st.P, samples, cfg.seed)
    summary = rep.summary()
    return summary, [_check("deformation_relative", summary["rel_diff_sup"], cfg.tol("deformation"))], rep.rows()


def cmd_identities(cfg, st, samples):
    fields = _test_fields(cfg, st.F, st.P)
    table = identity_suite(st.spray, fields, samples, cfg.seed)
    summary = table.summary()
    return summary, [_check("identities_scaled", table.worst(), cfg.tol("identity"))], table.rows()


def cmd_chain(cfg, st, samples):
    if st.F is None:
        raise UsageError("chain needs a metric with a Finsler function")
    _need_candidate(st, "chain")
    rep = obstruction_chain(st.F, st.P, samples, cfg.seed, tol=cfg.tol("chain"), S=st.spray)
    summary = rep.summary()
    funk_sup = summary["funk_sup"]
    checks = [_check("funk_equation_fails", funk_sup, cfg.tol("chain"), passed=funk_sup > cfg.tol("chain"))]
    return summary, checks, rep.rows()


def cmd_search(cfg, st, samples):
    radius = st.domain.size if cfg.domain and st.domain.kind == "ball" else SEARCH_DOMAIN.size
    sc = SearchConfig(restarts=cfg.restarts, max_iter=cfg.max_iter, seed=cfg.seed, samples=cfg.samples,
                      validation_samples=cfg.samples, radius=radius)
    res = search_funk(st.spray, sc, cfg.n)
    summary = res.to_dict()
    rows = summary.pop("per_restart")
    checks = []
    tol = cfg.tol("search_rms")
    if tol is not None:
        checks.append(_check("search_validation_rms", res.val_rms, tol))
    return summary, checks, rows


def cmd_catalog(cfg, st, samples):
    rows = []
    for e in cat.catalog():
        rows.append({"name": e.name, "kind": e.kind, "description": e.description, "kappa": e.kappa,
                     "domain": e.domain.describe(), "n_range": [e.min_n, e.max_n]})
    return {"entries": len(rows)}, [], rows


HANDLERS = {
    "analyze": cmd_analyze,
    "funk-check": cmd_funk_check,
    "deform": cmd_deform,
    "identities": cmd_identities,
    "chain": cmd_chain,
    "search": cmd_search,
    "catalog": cmd_catalog,
}


def run(command: str, cfg: RunConfig) -> tuple:
    """Execute a command; returns ``(exit_code, report)``."""
    cfg = replace(cfg, command=command).validate()
    if command == "catalog":
        st, samples = None, None
    else:
        st = build(cfg)
        samples = None if command == "search" else draw_samples(st.domain, cfg.n, cfg.samples, cfg.seed)
    summary, checks, rows = HANDLERS[command](cfg, st, samples)
    if st is not None:
        summary = {"spray": st.spray.tag, "domain": st.domain.describe(), **summary}
    passed = all(c["passed"] for c in checks)
    report = {
        "version": __version__,
        "command": command,
        "config": cfg.echo(),
        "summary": summary,
        "samples": rows[:MAX_ROWS],
        "verdict": {"passed": passed, "checks": checks},
    }
    report = _clean(report)
    code = 3 if cfg.assert_mode and not passed else 0
    return code, report


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


# argument parsing -------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _tol_pair(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected NAME=VALUE")
    name, val = text.split("=", 1)
    try:
        return name.strip(), float(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad tolerance value {val!r}") from None


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file with [metric], [sampling], [tolerances] sections")
    common.add_argument("--metric", help="catalog metric or spray name")
    common.add_argument("--metric-expr", help="Finsler function as an expression in x1..xn, y1..yn")
    common.add_argument("--metric-degree", type=int, help="declared homogeneity degree of --metric-expr")
    common.add_argument("--candidate", help="catalog candidate name")
    common.add_argument("--candidate-expr", help="projective factor expression (may use F)")
    common.add_argument("--c", type=float, help="constant for the cF candidate")
    common.add_argument("--a", help="basic function a(x) for the aF candidate")
    common.add_argument("--n", type=int, help="dimension (2..4)")
    common.add_argument("--samples", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--domain", help='e.g. "x:ball(0.6);y:annulus(0.5,2)"')
    common.add_argument("--json", dest="json_path", help="write the JSON report here")
    common.add_argument("--assert", dest="assert_mode", action="store_true", default=None,
                        help="exit 3 if any check fails")
    common.add_argument("--tol", action="append", type=_tol_pair, default=None, metavar="NAME=VAL")
    common.add_argument("--field-expr", action="append", dest="fields", default=None,
                        help="test field for identities (repeatable)")
    common.add_argument("--restarts", type=int)
    common.add_argument("--max-iter", type=int)

    parser = _Parser(prog="funkspray", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    for key in ("metric", "metric_expr", "metric_degree", "candidate", "candidate_expr", "c", "a", "n",
                "samples", "seed", "domain", "json_path", "assert_mode", "restarts", "max_iter"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    if args.tol:
        tols = dict(values.get("tolerances", {}))
        tols.update(dict(args.tol))
        values["tolerances"] = tols
    if args.fields:
        values["fields"] = tuple(args.fields)
    return RunConfig(command=args.command, **values)


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        code, report = run(args.command, cfg)
    except (ParseError, CompileError, UsageError) as exc:
        print(f"funkspray: error: {exc}", file=sys.stderr)
        return 1
    except FunkSprayError as exc:
        print(f"funkspray: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    text = dumps(report)
    if cfg.json_path:
        with open(cfg.json_path, "w", encoding="utf-8") as fh:
            fh.write(text)
        verdict = "PASS" if report["verdict"]["passed"] else "FAIL"
        print(f"{args.command}: {verdict} -> {cfg.json_path}")
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
