import json

import pytest

from funkspray import __version__
from funkspray import catalog as cat
from funkspray.cli import DEFAULT_TOLERANCES, RunConfig, UsageError, main, parse_domain, run


def invoke(tmp_path, *argv, name="out.json"):
    path = tmp_path / name
    code = main([*argv, "--json", str(path)])
    report = json.loads(path.read_text()) if path.exists() else None
    return code, report


def check(report, name):
    return next(c for c in report["verdict"]["checks"] if c["name"] == name)


def test_funk_check_flat_linear_rational(tmp_path):
    code, rep = invoke(tmp_path, "funk-check", "--metric", "flat", "--candidate", "linear-rational",
                       "--n", "2", "--samples", "200", "--seed", "42", "--assert")
    assert code == 0
    assert rep["summary"]["sup_norm"] < 1e-10
    assert set(rep) == {"version", "command", "config", "summary", "samples", "verdict"}
    assert rep["version"] == __version__ and rep["config"]["seed"] == 42
    assert len(rep["samples"]) == 200


def test_analyze_sphere(tmp_path):
    code, rep = invoke(tmp_path, "analyze", "--metric", "sphere", "--assert")
    assert code == 0
    fc = rep["summary"]["flag_curvature"]
    assert abs(fc["kappa_min"] - 1) < 1e-8 and abs(fc["kappa_max"] - 1) < 1e-8
    assert rep["summary"]["rho_minus_kappa_F2_sup"] < 1e-7


def test_funk_check_sphere_cF_fails_assertion(tmp_path):
    code, rep = invoke(tmp_path, "funk-check", "--metric", "sphere", "--candidate", "cF", "--c", "1.0", "--assert")
    assert code == 3
    assert not rep["verdict"]["passed"]
    assert rep["summary"]["sup_norm"] > 1.0


def test_failure_without_assert_exits_zero(tmp_path):
    code, rep = invoke(tmp_path, "funk-check", "--metric", "sphere", "--candidate", "cF")
    assert code == 0 and not rep["verdict"]["passed"]


@pytest.mark.parametrize(
    "argv",
    [
        ["analyze", "--metric", "nope"],
        ["analyze", "--n", "5"],
        ["analyze", "--samples", "0"],
        ["funk-check", "--metric", "sphere", "--candidate-expr", "y1 +"],
        ["funk-check", "--metric", "sphere", "--candidate", "aF", "--a", "y1"],
        ["funk-check", "--metric", "sphere"],
        ["analyze", "--tol", "bogus=1"],
        ["analyze", "--domain", "z:box(1)"],
        ["frobnicate"],
        ["analyze", "--samples", "many"],
        ["funk-check", "--metric", "iso-deformed", "--candidate", "cF"],
        ["analyze", "--metric", "sphere", "--metric-expr", "sqrt(y1^2+y2^2)"],
    ],
)
def test_usage_errors_exit_1(argv):
    assert exit_code(argv) == 1


def exit_code(argv):
    # argparse reports its own errors through SystemExit
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code


@pytest.mark.parametrize(
    "argv",
    [
        ["analyze", "--metric-expr", "y1"],  # degenerate Hessian
        ["analyze", "--metric-expr", "y1^2 + y2^2"],  # not 1-homogeneous
        ["chain", "--metric", "euclidean", "--candidate", "cF"],  # kappa = 0
        ["funk-check", "--metric", "klein", "--candidate", "theta", "--domain", "x:box(1)"],
    ],
)
def test_numerical_failures_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_chain_sphere(tmp_path):
    code, rep = invoke(tmp_path, "chain", "--metric", "sphere", "--candidate", "cF", "--assert")
    assert code == 0
    assert rep["summary"]["verdict"]["basic_contradiction"]
    assert rep["verdict"]["checks"][0]["name"] == "funk_equation_fails"


def test_deform_and_identities(tmp_path):
    code, rep = invoke(tmp_path, "deform", "--metric", "klein", "--candidate-expr", "x1*y2 + F", "--assert")
    assert code == 0 and rep["summary"]["rel_diff_sup"] < 1e-7
    code, rep = invoke(tmp_path, "identities", "--metric", "funk-ball", "--n", "3", "--samples", "50", "--assert")
    assert code == 0 and len(rep["samples"]) == 3
    code, rep = invoke(tmp_path, "identities", "--metric", "sphere", "--field-expr", "x1*y2 + F",
                       "--field-expr", "y2", "--assert")
    assert code == 0 and [r["field"] for r in rep["samples"]] == ["x1*y2 + F", "y2"]


def test_search_command(tmp_path):
    code, rep = invoke(tmp_path, "search", "--metric", "flat", "--restarts", "2", "--samples", "40",
                       "--tol", "search_rms=1e-8", "--assert")
    assert code == 0
    assert rep["summary"]["val_rms"] < 1e-8
    assert len(rep["samples"]) == 2
    code, rep = invoke(tmp_path, "search", "--metric", "sphere", "--restarts", "1", "--max-iter", "10",
                       "--samples", "30", "--tol", "search_rms=1e-8", "--assert")
    assert code == 3


def test_catalog_command(tmp_path):
    code, rep = invoke(tmp_path, "catalog")
    assert code == 0
    names = {r["name"]: r for r in rep["samples"]}
    assert names["euclidean"]["kappa"] == 0
    assert names["sphere"]["kappa"] == 1
    assert names["funk-ball"]["kappa"] == -0.25
    assert {"theta", "linear-rational", "cF", "aF"} <= set(names)


def test_stdout_report(capsys):
    assert main(["funk-check", "--metric", "flat", "--candidate", "linear-rational", "--samples", "5"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["command"] == "funk-check"


def test_rows_capped(tmp_path):
    code, rep = invoke(tmp_path, "funk-check", "--metric", "flat", "--candidate", "linear-rational",
                       "--samples", "1200")
    assert code == 0 and len(rep["samples"]) == 1000
    assert rep["summary"]["sample_count"] == 1200


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        "[metric]\nname = sphere\ncandidate = cF\nc = 2.0\n\n"
        "[sampling]\nsamples = 30\nseed = 7\ndomain = x:ball(0.5);y:annulus(1,1.5)\n\n"
        "[tolerances]\nfunk = 100\n"
    )
    code, rep = invoke(tmp_path, "funk-check", "--config", str(cfg), "--seed", "9", "--assert")
    assert code == 0
    c = rep["config"]
    assert (c["metric"], c["candidate"], c["c"], c["samples"], c["seed"]) == ("sphere", "cF", 2.0, 30, 9)
    assert c["tolerances"]["funk"] == 100
    assert rep["summary"]["domain"] == "x:ball(0.5);y:annulus(1,1.5)"
    code, rep = invoke(tmp_path, "funk-check", "--config", str(cfg), "--tol", "funk=1e-8", "--assert")
    assert code == 3


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[metric]\ncolour = blue\n")
    assert main(["analyze", "--config", str(cfg)]) == 1
    assert main(["analyze", "--config", str(tmp_path / "missing.ini")]) == 1


def test_domain_parsing():
    d = parse_domain("x:box(0.8);y:annulus(0.5,2)", cat.BALL)
    assert (d.kind, d.size, d.y_min, d.y_max) == ("box", 0.8, 0.5, 2.0)
    assert parse_domain("x:ball(0.3)", cat.BOX).describe() == "x:ball(0.3);y:annulus(0.5,2)"
    for bad in ("x:ball(-1)", "y:annulus(2,1)", "x:cube(1)", "y:ball(1)"):
        with pytest.raises(UsageError):
            parse_domain(bad, cat.BOX)


def test_run_config_defaults():
    cfg = RunConfig()
    assert (cfg.n, cfg.samples, cfg.seed, cfg.c, cfg.a) == (2, 200, 42, 1.0, "1")
    assert cfg.tol("funk") == DEFAULT_TOLERANCES["funk"] == 1e-8
    assert cfg.tol("search_rms") is None
    code, rep = run("funk-check", RunConfig(metric="flat", candidate="theta", samples=10))
    assert code == 0 and rep["verdict"]["passed"]
    assert "json_path" not in rep["config"]


def test_determinism_byte_identical(tmp_path):
    argv = ["analyze", "--metric", "funk-ball", "--samples", "50"]
    main([*argv, "--json", str(tmp_path / "a.json")])
    main([*argv, "--json", str(tmp_path / "b.json")])
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
