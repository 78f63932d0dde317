import csv
import functools
import json
import subprocess
import sys

import numpy as np
import pytest

from lyapflow import cli, config, integrator
from lyapflow.errors import ConfigError

QUAD = {"q": {"kind": "quadratic", "spectrum": [1, 2, 5, 10], "x_star": [1, -1, 0.5, 2]}}


def write_config(tmp_path, systems, name="cfg.json", **extra):
    cfg = {"schema_version": 1, "objectives": QUAD, "systems": systems, "t0": 0.1, "samples": 600}
    cfg.update(extra)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def nag(r, name=None, **kw):
    return {"name": name or f"nag{r}", "kind": "nag", "r": str(r), "objective": "q", **kw}


def alpha(r, a, name=None, **kw):
    return {"name": name or f"alpha{r}", "kind": "generalized-nag", "r": str(r), "alpha": a,
            "objective": "q", **kw}


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def main(*args):
    return cli.main([str(a) for a in args])


def test_simulate_gradient_flow(tmp_path):
    cfg = write_config(tmp_path, [{"name": "gf", "kind": "gradient-flow", "objective": "q", "t_end": 5}])
    out = tmp_path / "out"
    assert main("simulate", "--config", cfg, "--out", out) == 0
    assert [p.name for p in out.iterdir()] == ["traj_gf.csv"]
    header, data = read_csv(out / "traj_gf.csv")
    assert header == ["t", "x0", "x1", "x2", "x3", "v0", "v1", "v2", "v3", "f_gap", "err"]
    assert np.all(np.diff(data[:, 0]) > 0)
    assert data[0, 0] == 0.1 and data[-1, 0] == 5.0


def test_simulate_nag_gap_decreases_after_T(tmp_path):
    cfg = write_config(tmp_path, [nag(4)], t_end=100)
    out = tmp_path / "out"
    assert main("simulate", "--config", cfg, "--out", out) == 0
    header, data = read_csv(out / "traj_nag4.csv")
    t, gap = data[:, 0], data[:, header.index("f_gap")]
    assert np.all(gap > 0)
    after = t >= np.sqrt(2 * 16 / 9)
    env = np.maximum.accumulate(gap[after][::-1])[::-1]
    assert np.all(np.diff(env) <= 0) and env[-1] < 1e-3 * env[0]


def test_invalid_alpha_names_field(tmp_path, capsys):
    cfg = write_config(tmp_path, [alpha(3, "3/2")], t_end=10)
    assert main("simulate", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "systems[0].alpha" in capsys.readouterr().err


def test_certify_paper_nag_bundle(tmp_path):
    cfg = write_config(tmp_path, [nag(3), nag(4), nag(6)], t_end=100)
    out = tmp_path / "out"
    assert main("certify", "--config", cfg, "--out", out) == 0
    header, *rows = list(csv.reader(open(out / "certify_summary.csv")))
    assert header == ["run", "inequality_id", "pass", "max_violation", "location"]
    ids = {r[1] for r in rows}
    assert {"monotone", "main-nonneg", "velocity-bound", "rate-bound", "y-growth", "dEdt-match"} <= ids
    assert all(r[2] == "True" for r in rows)
    bundle = json.loads((out / "certify_nag6.json").read_text())
    assert bundle["pass"] and bundle["lyapunov"]["provenance"] == "paper-nag"


def test_certify_mutated_g_fails(tmp_path, capsys):
    cfg = write_config(tmp_path, [alpha(3, "1/2")], t_end=100, lyapunov={"g_scale": "2"})
    assert main("certify", "--config", cfg, "--out", tmp_path / "o") == 1
    assert "alpha3:monotone" in capsys.readouterr().err
    bundle = json.loads((tmp_path / "o" / "certify_alpha3.json").read_text())
    assert not bundle["pass"]


def test_certify_span_before_T_writes_nothing(tmp_path, capsys):
    cfg = write_config(tmp_path, [nag(3, name="ok", t_end=50), nag(6, name="short", t_end=2)])
    out = tmp_path / "o"
    assert main("certify", "--config", cfg, "--out", out) == 2
    assert "does not contain T" in capsys.readouterr().err
    assert list(out.iterdir()) == []


def test_certify_discovered_selection(tmp_path):
    cfg = write_config(tmp_path, [nag(5)], t_end=60, lyapunov={"select": "discovered", "index": 0})
    out = tmp_path / "o"
    assert main("certify", "--config", cfg, "--out", out) == 0
    assert json.loads((out / "certify_nag5.json").read_text())["lyapunov"]["provenance"] == "discovered"


def test_certify_gradient_flow_boundedness(tmp_path):
    gf = {"name": "gf", "kind": "gradient-flow", "objective": "q", "t_end": 20}
    cfg = write_config(tmp_path, [gf], samples=1000)
    assert main("certify", "--config", cfg, "--out", tmp_path / "a") == 0
    cfg = write_config(tmp_path, [gf], name="m.json", samples=1000, lyapunov={"gamma_prime_scale": "6/5"})
    assert main("certify", "--config", cfg, "--out", tmp_path / "b") == 1


def test_gamma_cap_sets_the_span(tmp_path):
    cfg = write_config(tmp_path, [alpha(3, "1/2")], gamma_cap=20)
    out = tmp_path / "o"
    assert main("simulate", "--config", cfg, "--out", out) == 0
    _, data = read_csv(out / "traj_alpha3.csv")
    assert data[-1, 0] == pytest.approx(25.0, rel=1e-10)  # 4 sqrt(t) = 20


def test_discover_nag_and_alpha(tmp_path):
    cfg = write_config(tmp_path, [], symsearch={
        "grid": ["-2", "-3/2", "-1", "-1/2", "0"],
        "cases": [{"r": "6", "mu": 1}, {"r": "3", "alpha": "1/2", "mu": 1}]})
    out = tmp_path / "o"
    assert main("discover", "--config", cfg, "--out", out) == 0
    cases = json.loads((out / "candidates.json").read_text())["cases"]
    nag6, alpha3 = cases[0]["candidates"][0], cases[1]["candidates"][0]
    assert nag6["gamma_prime"] == [[[4, 1], [-1, 1]]] and nag6["g"] == [[[2, 1], [-2, 1]]]
    assert nag6["T"] == {"base": [8, 1], "root_index": [2, 1]}
    assert alpha3["g"] == [[[-1, 2], [-3, 2]], [[1, 1], [-1, 1]]]
    assert alpha3["T"] == {"base": [2, 1], "root_index": [1, 1]}


def test_discover_empty_grid(tmp_path):
    cfg = write_config(tmp_path, [], symsearch={"grid": [], "cases": [{"r": "6"}]})
    assert main("discover", "--config", cfg, "--out", tmp_path / "o") == 0
    data = json.loads((tmp_path / "o" / "candidates.json").read_text())
    assert data["cases"][0]["candidates"] == []


def test_discover_reconstruction(tmp_path):
    cfg = write_config(tmp_path, [], symsearch={"r_values": ["3", "4", "6", "9"]})
    assert main("discover", "--config", cfg, "--out", tmp_path / "o") == 0
    rec = json.loads((tmp_path / "o" / "reconstruction.json").read_text())
    assert rec["g"]["-2"]["formula"] == "1/9*r^2 - 1/3*r"
    assert rec["h"]["-1"]["formula"] == "2/3*r"


def test_fit_nag_and_alpha(tmp_path):
    cfg = write_config(tmp_path, [nag(6), alpha(3, "1/2")], t_end=100, samples=1500)
    out = tmp_path / "o"
    assert main("fit", "--config", cfg, "--out", out) == 0
    f6 = json.loads((out / "fit_nag6.json").read_text())
    assert f6["fit"]["model"] == "power-law" and f6["fit"]["slope"] <= -3.8
    assert f6["comparison"]["flags"]["improves_previous"]
    fa = json.loads((out / "fit_alpha3.json").read_text())
    assert fa["fit"]["model"] == "stretched-exponential"
    header, _ = read_csv(out / "plot_nag6.csv")
    assert header == ["t", "f_gap", "logE", "weighted_gap", "bound"]


def test_fit_synthetic_input(tmp_path):
    t = np.geomspace(1, 1000, 100)
    src = tmp_path / "in.csv"
    src.write_text("t,f_gap\n" + "".join(f"{a!r},{b!r}\n" for a, b in zip(t.tolist(), (5 * t ** -2.5).tolist())))
    cfg = write_config(tmp_path, [], fit={"input": str(src)})
    assert main("fit", "--config", cfg, "--out", tmp_path / "o") == 0
    data = json.loads((tmp_path / "o" / "fit_input.json").read_text())
    assert data["fit"]["slope"] == pytest.approx(-2.5, abs=1e-10)


def test_fit_malformed_input(tmp_path, capsys):
    src = tmp_path / "in.csv"
    src.write_text("t,f_gap\n1.0,abc\n")
    cfg = write_config(tmp_path, [], fit={"input": str(src)})
    assert main("fit", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "fit.input" in capsys.readouterr().err


def test_report_renders_figures(tmp_path):
    cfg = write_config(tmp_path, [nag(4)], t_end=60)
    out = tmp_path / "o"
    assert main("certify", "--config", cfg, "--out", out) == 0
    assert main("fit", "--config", cfg, "--out", out) == 0
    assert main("report", "--out", out) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["certify"]["nag4"]["pass"]
    assert (out / "figures" / "nag4.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert (out / "figures" / "rates.png").exists()


def test_outputs_are_deterministic(tmp_path):
    cfg = write_config(tmp_path, [nag(4), alpha(3, "1/2")], t_end=40)
    outs = []
    for name, jobs in (("a", 1), ("b", 1), ("c", 2)):
        out = tmp_path / name
        for cmd in ("simulate", "certify", "fit"):
            main(cmd, "--config", cfg, "--out", out, "--jobs", jobs)
        main("report", "--out", out)
        outs.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    assert outs[0] == outs[1] == outs[2]


def test_integration_failure_exit_code(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(integrator, "integrate", functools.partial(integrator.integrate, max_steps=50))
    cfg = write_config(tmp_path, [nag(3)], t_end=100)
    assert main("simulate", "--config", cfg, "--out", tmp_path / "o") == 3
    assert "last good t" in capsys.readouterr().err


def test_output_directory_from_environment(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, [{"name": "gf", "kind": "gradient-flow", "objective": "q", "t_end": 2}])
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert main("simulate", "--config", cfg) == 0
    assert (tmp_path / "env" / "traj_gf.csv").exists()


def test_seed_flag_reaches_objectives(tmp_path):
    objs = {"l": {"kind": "regularized-logsumexp", "dimension": 3}}
    raw = {"schema_version": 1, "objectives": objs, "systems": [], "t0": 0.1}
    a = config.parse(raw, seed=1).objectives["l"]
    b = config.parse(raw, seed=2).objectives["l"]
    assert not np.array_equal(a.rows, b.rows)


@pytest.mark.parametrize("patch,field", [
    ({"schema_version": 2}, "schema_version"),
    ({"bogus": 1}, "bogus"),
    ({"t_end": 10, "gamma_cap": 40}, "systems[0]"),
    ({"tolerances": {"rtol": -1}}, "tolerances.rtol"),
    ({"lyapunov": {"select": "best"}}, "lyapunov.select"),
    ({"fit": {"model": "cubic"}}, "fit.model"),
])
def test_config_errors_name_the_field(patch, field):
    raw = {"schema_version": 1, "objectives": QUAD, "systems": [nag(4)], "t_end": 10}
    raw.update(patch)
    with pytest.raises(ConfigError) as info:
        config.parse(raw)
    assert info.value.field == field


def test_rational_strings_are_exact():
    raw = {"schema_version": 1, "objectives": QUAD, "systems": [alpha(3, "2/3")], "t_end": 10}
    from fractions import Fraction
    assert config.parse(raw).runs[0].system.alpha == Fraction(2, 3)


def test_console_entry_point(tmp_path):
    cfg = write_config(tmp_path, [{"name": "gf", "kind": "gradient-flow", "objective": "q", "t_end": 1}])
    res = subprocess.run([sys.executable, "-m", "lyapflow.cli", "simulate", "--config", cfg,
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    res = subprocess.run([sys.executable, "-m", "lyapflow.cli", "simulate", "--config",
                          str(tmp_path / "missing.json")], capture_output=True, text=True)
    assert res.returncode == 2 and "missing.json" in res.stderr
