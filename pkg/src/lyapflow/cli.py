"""Command line entry point: ``lyapflow {simulate,certify,discover,fit,report}``.

Exit codes: 0 success, 1 a certification failed, 2 bad input or
configuration, 3 integration failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import config as cfgmod
from . import integrator, lyapunov, objectives, ratefit, symsearch
from .errors import ConfigError, InputError, IntegrationError, ReconstructionError
from .powersum import PowerSum

OUT_ENV = "LYAPFLOW_OUT"
EXIT_OK, EXIT_CERT, EXIT_INPUT, EXIT_INTEGRATION = 0, 1, 2, 3


# --- shared helpers ---------------------------------------------------------

def _q(x: Fraction):
    return None if x is None else cfgmod.exact_str(x)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def _columns_csv(columns: dict) -> str:
    keys = list(columns)
    cols = [np.asarray(columns[k], dtype=float) for k in keys]
    return _csv(([repr(float(v)) for v in row] for row in zip(*cols)), keys)


def _select_lyapunov(cfg, run):
    sys_ = run.system
    if sys_.kind not in ("nag", "generalized-nag"):
        return None
    ly = cfg.lyapunov
    if ly["select"] == "paper":
        spec = lyapunov.for_system(sys_)
    else:
        ss = cfg.symsearch
        mu = Fraction(sys_.objective.mu).limit_denominator(10 ** 12)
        cands = symsearch.search(sys_.damping_powersum(), ss["grid"], mu,
                                 ss["max_terms"], ss.get("relax_scales"))
        if ly["index"] >= len(cands):
            raise ConfigError(f"only {len(cands)} discovered candidates for {run.name}",
                              "lyapunov.index")
        spec = cands[ly["index"]].spec
    return lyapunov.mutate(spec, ly["g_scale"], ly["gamma_prime_scale"])


def _t_end(run, lyap):
    if run.t_end is not None:
        return run.t_end
    gamma = lyap.gamma
    target = run.gamma_cap
    if gamma(run.t0) >= target:
        raise InputError(f"{run.name}: gamma already exceeds the cap at t0")
    hi = max(2 * run.t0, 1.0)
    while gamma(hi) < target:
        hi *= 2
        if hi > 1e12:
            raise InputError(f"{run.name}: gamma does not reach the cap before t = 1e12")
    return float(brentq(lambda t: gamma(t) - target, run.t0, hi, xtol=1e-12, rtol=1e-14))


def _plan(cfg, run):
    """``(lyap, t_end, T)`` for a run, validated before any integration."""
    lyap = _select_lyapunov(cfg, run)
    if lyap is None:
        if run.t_end is None:
            raise ConfigError("t_end is required for undamped or first-order systems", run.name)
        return None, run.t_end, None
    t_end = _t_end(run, lyap)
    T = lyapunov.threshold_T(lyap, run.system)
    return lyap, t_end, T


def _integrate(cfg, run, t_end, T):
    extra = [T] if T is not None and run.t0 <= T <= t_end else []
    grid = integrator.geometric_grid(run.t0, t_end, cfg.samples, extra)
    return integrator.integrate(run.system, run.t0, run.x0, run.v0, t_end=t_end,
                                tol=cfg.tol, sample_grid=grid)


def _plot_columns(traj, lyap, T):
    gap = traj.gap()
    cols = {"t": traj.t, "f_gap": gap}
    if lyap is not None:
        le = lyapunov.eval_logE(lyap, traj.system, traj.t, traj.dx, traj.v)
        cols["logE"] = np.where(le.sign > 0, le.logE, np.nan)
        with np.errstate(over="ignore"):
            cols["weighted_gap"] = gap * np.exp(le.gamma)
        bound = np.full(traj.t.size, np.nan)
        if T is not None and traj.t0 <= T <= traj.t_end:
            rb = lyapunov.rate_bound(traj, lyap)
            idx = np.searchsorted(traj.t, rb.t)
            hit = (idx < traj.t.size) & (traj.t[np.minimum(idx, traj.t.size - 1)] == rb.t)
            bound[idx[hit]] = np.exp(rb.log_bound[hit])
        cols["bound"] = bound
    elif traj.system.kind == "gradient-flow":
        mu = traj.system.objective.mu
        cols["weighted_gap"] = gap * np.exp(2 * mu * traj.t)
    return cols


# --- per-run workers ----------------------------------------------------------

def _work(task, raw, seed, i):
    """Compute one run cell; returns ``{"files": {...}, ...}`` or an error record."""
    try:
        cfg = cfgmod.parse(raw, seed)
        run = cfg.runs[i]
        lyap, t_end, T = _plan(cfg, run)
        traj = _integrate(cfg, run, t_end, T)
        return globals()[f"_work_{task}"](cfg, run, lyap, T, traj)
    except IntegrationError as exc:
        return {"error": ["integration", str(exc)]}
    except (InputError, ReconstructionError) as exc:
        return {"error": ["input", str(exc)]}


def _work_simulate(cfg, run, lyap, T, traj):
    buf = io.StringIO()
    header = (["t"] + [f"x{i}" for i in range(traj.x.shape[1])]
              + [f"v{i}" for i in range(traj.v.shape[1])] + ["f_gap", "err"])
    gap = traj.gap()
    rows = ([repr(float(v)) for v in np.concatenate(([t], x, v, [g], [e]))]
            for t, x, v, g, e in zip(traj.t, traj.x, traj.v, gap, traj.err))
    buf.write(_csv(rows, header))
    return {"files": {f"traj_{run.name}.csv": buf.getvalue()}, "failed": []}


def _gradient_flow_reports(cfg, run, traj):
    mu = run.system.objective.mu
    scale = cfg.lyapunov["gamma_prime_scale"]
    gamma = PowerSum.monomial(2 * Fraction(mu).limit_denominator(10 ** 12) * scale, 0).antiderivative()
    return [ratefit.check_weighted_boundedness(traj, gamma)]


def _work_certify(cfg, run, lyap, T, traj):
    reports = [objectives.check_strong_convexity(run.system.objective, seed=cfg.seed)]
    if lyap is None:
        if run.system.kind == "gradient-flow":
            reports += _gradient_flow_reports(cfg, run, traj)
    else:
        reports += lyapunov.certify_all(traj, lyap, cfg.lyapunov.get("monotone_tol"))
        reports.append(integrator.certify_energy_decrease(traj))
        reports.append(ratefit.check_weighted_boundedness(traj, lyap.gamma, T=T))
    payload = {
        "run": run.name,
        "system": {"kind": run.system.kind, "r": _q(run.system.r), "alpha": _q(run.system.alpha)},
        "lyapunov": None if lyap is None else lyap.to_json(),
        "T": T,
        "t_end": traj.t_end,
        "reports": [r.to_json() for r in reports],
        "pass": all(r.passed for r in reports),
    }
    files = {
        f"certify_{run.name}.json": _dumps(payload),
        f"plot_{run.name}.csv": _columns_csv(_plot_columns(traj, lyap, T)),
    }
    rows = [[run.name, r.inequality_id, r.passed, repr(r.max_violation), repr(r.violation_location)]
            for r in reports]
    return {"files": files, "rows": rows, "failed": [f"{run.name}:{r.inequality_id}"
                                                     for r in reports if not r.passed]}


def _work_fit(cfg, run, lyap, T, traj):
    sys_ = run.system
    model = cfg.fit["model"]
    if model == "auto":
        model = "power-law" if sys_.kind == "nag" else "stretched-exponential"
    window = cfg.fit.get("window")
    if window is None:
        window = ratefit.default_window(traj, T=T, gamma=None if lyap is None else lyap.gamma)
    rf = ratefit.fit(traj, model, window=window, T=T)
    cmp_ = None
    if sys_.kind == "nag":
        cmp_ = ratefit.compare_rates(sys_.r)
    elif sys_.kind == "generalized-nag":
        cmp_ = ratefit.compare_rates(sys_.r, sys_.alpha, cfg.fit["eps"])
    payload = {"run": run.name, "fit": rf.to_json(), "T": T,
               "comparison": None if cmp_ is None else cmp_.to_json()}
    files = {
        f"fit_{run.name}.json": _dumps(payload),
        f"plot_{run.name}.csv": _columns_csv(_plot_columns(traj, lyap, T)),
    }
    if cmp_ is not None:
        files[f"comparison_{run.name}.csv"] = _csv(
            ([r["system"], r["rate"], r["exponent"], repr(r["value"])] for r in cmp_.rows()),
            ["system", "rate", "exponent", "value"])
    return {"files": files, "failed": []}


def _run_cells(task, cfg, jobs):
    args = [(task, cfg.raw, cfg.seed, i) for i in range(len(cfg.runs))]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_work, *zip(*args)))
    return [_work(*a) for a in args]


def _write(out: Path, files: dict):
    for name, text in files.items():
        (out / name).write_text(text)


def _check_errors(results):
    for res in results:
        if "error" in res:
            kind, msg = res["error"]
            raise (_IntegrationFailure if kind == "integration" else InputError)(msg)


class _IntegrationFailure(Exception):
    pass


# --- subcommands ----------------------------------------------------------------

def run_simulate(cfg, out: Path, jobs=1) -> int:
    for run in cfg.runs:
        _plan(cfg, run)
    results = _run_cells("simulate", cfg, jobs)
    _check_errors(results)
    for res in results:
        _write(out, res["files"])
    return EXIT_OK


def run_certify(cfg, out: Path, jobs=1) -> int:
    # every span must reach T before anything is integrated or written
    for run in cfg.runs:
        lyap, t_end, T = _plan(cfg, run)
        if T is not None and not run.t0 <= T <= t_end:
            raise InputError(f"{run.name}: span [{run.t0:g}, {t_end:g}] does not contain T = {T:.6g}")
    results = _run_cells("certify", cfg, jobs)
    _check_errors(results)
    rows, failed = [], []
    for res in results:
        _write(out, res["files"])
        rows += res["rows"]
        failed += res["failed"]
    (out / "certify_summary.csv").write_text(
        _csv(rows, ["run", "inequality_id", "pass", "max_violation", "location"]))
    for f in failed:
        print(f"FAILED {f}", file=sys.stderr)
    return EXIT_CERT if failed else EXIT_OK


def _discover_cases(cfg):
    ss = cfg.symsearch
    if ss["cases"]:
        return ss["cases"]
    cases = []
    for run in cfg.runs:
        if run.system.kind in ("nag", "generalized-nag"):
            cases.append({"r": run.system.r, "alpha": run.system.alpha,
                          "mu": Fraction(run.system.objective.mu).limit_denominator(10 ** 12)})
    return cases


def _damping(r, alpha):
    return PowerSum.monomial(r, -1 if alpha is None else -alpha)


def run_discover(cfg, out: Path, jobs=1) -> int:
    ss = cfg.symsearch
    entries = []
    for case in _discover_cases(cfg):
        cands = symsearch.search(_damping(case["r"], case["alpha"]), ss["grid"], case["mu"],
                                 ss["max_terms"], ss.get("relax_scales"))
        entries.append({
            "r": _q(case["r"]), "alpha": _q(case["alpha"]), "mu": _q(case["mu"]),
            "grid": [_q(p) for p in sorted(set(ss["grid"]))],
            "candidates": symsearch.candidates_to_json(cands),
        })
    (out / "candidates.json").write_text(_dumps({"cases": entries}))
    if ss.get("r_values"):
        (out / "reconstruction.json").write_text(_dumps(_reconstruct(ss)))
    return EXIT_OK


def _reconstruct(ss):
    alpha, mu = ss.get("alpha"), ss["mu"]
    tops = []
    for r in ss["r_values"]:
        cands = symsearch.search(_damping(r, alpha), ss["grid"], mu, ss["max_terms"])
        if not cands:
            raise ReconstructionError(f"no candidate at r = {r}")
        tops.append((r, cands[0].spec))
    out = {"alpha": _q(alpha), "mu": _q(mu), "r_values": [_q(r) for r, _ in tops]}
    for field in ("gamma_prime", "g", "h"):
        rec = symsearch.reconstruct_parameter_dependence([(r, getattr(s, field)) for r, s in tops])
        out[field] = {_q(p): rf.to_json() for p, rf in rec.items()}
    return out


def run_fit(cfg, out: Path, jobs=1) -> int:
    for run in cfg.runs:
        _plan(cfg, run)
    results = _run_cells("fit", cfg, jobs)
    _check_errors(results)
    for res in results:
        _write(out, res["files"])
    src = cfg.fit.get("input")
    if src:
        from .plotting import read_columns
        try:
            cols = read_columns(src)
        except FileNotFoundError:
            raise ConfigError(f"no such file {src}", "fit.input") from None
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"unreadable CSV ({exc})", "fit.input") from None
        if "t" not in cols or "f_gap" not in cols:
            raise ConfigError("input needs columns t and f_gap", "fit.input")
        model = "power-law" if cfg.fit["model"] == "auto" else cfg.fit["model"]
        rf = ratefit.fit_samples(cols["t"], cols["f_gap"], model, cfg.fit.get("window"),
                                 alpha=float(cfg.fit.get("alpha", 0.0)))
        (out / "fit_input.json").write_text(_dumps({"run": "input", "fit": rf.to_json()}))
    return EXIT_OK


def run_report(out: Path) -> int:
    """Merge the JSON outputs found in ``out`` and render figures."""
    from . import plotting
    if not out.is_dir():
        raise InputError(f"no output directory {out}")
    merged = {"certify": {}, "fit": {}, "discover": None}
    rows = []
    for p in sorted(out.glob("certify_*.json")):
        d = json.loads(p.read_text())
        merged["certify"][d["run"]] = d
        for r in d["reports"]:
            rows.append(["certify", d["run"], r["inequality_id"], r["pass"], r["max_violation"]])
    rate_rows = []
    for p in sorted(out.glob("fit_*.json")):
        d = json.loads(p.read_text())
        merged["fit"][d["run"]] = d
        rows.append(["fit", d["run"], d["fit"]["model"], "", d["fit"]["slope"]])
        cmp_ = d.get("comparison")
        if cmp_:
            proven = cmp_["rates"]["lyapunov"]["value"]
            # the stretched model's slope is already in units of t^(1-alpha)
            rate_rows.append((d["run"], -d["fit"]["slope"], proven))
    cand = out / "candidates.json"
    if cand.exists():
        merged["discover"] = json.loads(cand.read_text())
        for case in merged["discover"]["cases"]:
            rows.append(["discover", f"r={case['r']},alpha={case['alpha']},mu={case['mu']}",
                         "candidates", "", len(case["candidates"])])
    (out / "report.json").write_text(_dumps(merged))
    (out / "report.csv").write_text(_csv(rows, ["section", "name", "item", "pass", "value"]))
    figs = out / "figures"
    plots = sorted(out.glob("plot_*.csv"))
    if plots or rate_rows:
        figs.mkdir(exist_ok=True)
    for p in plots:
        name = p.stem[len("plot_"):]
        T = None
        for section in ("certify", "fit"):
            if name in merged[section]:
                T = merged[section][name].get("T")
        plotting.render_run(p, figs / f"{name}.png", title=name, T=T)
    if rate_rows:
        plotting.render_rates(rate_rows, figs / "rates.png")
    return EXIT_OK


# --- entry point --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lyapflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "integrate every configured system"),
                        ("certify", "run the Lyapunov certifications"),
                        ("discover", "search for Lyapunov functions"),
                        ("fit", "fit decay rates and compare with known rates"),
                        ("report", "merge outputs and render figures")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=name != "report", help="experiment JSON file")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./lyapflow-out)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel run cells")
    return parser


def _out_dir(args, cfg) -> Path:
    out = args.out or (cfg.output if cfg is not None else None) or os.environ.get(OUT_ENV) or "lyapflow-out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise InputError("--jobs must be at least 1")
        cfg = cfgmod.load(args.config, args.seed) if args.config else None
        out = _out_dir(args, cfg)
        if args.command == "report":
            return run_report(out)
        handler = {"simulate": run_simulate, "certify": run_certify,
                   "discover": run_discover, "fit": run_fit}[args.command]
        return handler(cfg, out, args.jobs)
    except _IntegrationFailure as exc:
        print(f"error: integration failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except IntegrationError as exc:
        print(f"error: integration failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except (InputError, ReconstructionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
