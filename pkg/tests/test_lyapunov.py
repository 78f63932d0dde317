import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import X_STAR, make_system, run
from lyapflow import collection, dynamics, integrator, lyapunov, objectives, symsearch
from lyapflow.errors import InputError
from lyapflow.powersum import PowerSum, Radical

Q = Fraction
UNIT = objectives.quadratic([1.0], [0.0])


def arr(x):
    return np.array([[float(x)]])


def test_closed_form_coefficients():
    s = lyapunov.paper_nag(6)
    assert s.gamma_prime == s.h == PowerSum.monomial(4, -1)
    assert s.g == PowerSum.monomial(2, -2)
    a = lyapunov.paper_alpha(3, Q(1, 2))
    assert a.gamma_prime == a.h == PowerSum.monomial(2, Q(-1, 2))
    assert a.g == PowerSum([(1, -1), (Q(-1, 2), Q(-3, 2))])
    assert lyapunov.paper_nag(3).g.is_zero()


def test_gamma_normalisation():
    assert lyapunov.paper_nag(6).gamma(np.e) == pytest.approx(4.0)
    # (2/3) (r / (1 - a)) t^(1-a) at r = 3, a = 1/2, t = 4
    assert lyapunov.paper_alpha(3, Q(1, 2)).gamma(4.0) == pytest.approx(8.0)


@pytest.mark.parametrize("r,alpha,mu,expected", [
    (3, None, 1, math.sqrt(2)), (3, Q(1, 2), 1, 2.0), (3, None, 2, 1.0)])
def test_thresholds(r, alpha, mu, expected):
    sys_ = (dynamics.nag(objectives.quadratic([mu]), r) if alpha is None
            else dynamics.generalized_nag(objectives.quadratic([mu]), r, alpha))
    lyap = lyapunov.for_system(sys_)
    assert lyapunov.threshold_T(lyap, sys_) == pytest.approx(expected, rel=1e-15)


def test_exact_threshold_forms():
    sys_ = dynamics.generalized_nag(UNIT, 3, Q(1, 2))
    assert lyapunov.threshold_exact(lyapunov.for_system(sys_), sys_) == Radical(2)
    sys_ = dynamics.nag(UNIT, 6)
    assert lyapunov.threshold_exact(lyapunov.for_system(sys_), sys_).power(2) == 8


def test_logE_hand_example():
    # main part 1/2 - 2/4 = 0, velocity part 1/2 (4/2)^2 = 2, gamma = 4 log 2
    le = lyapunov.eval_logE(lyapunov.paper_nag(6), dynamics.nag(UNIT, 6), np.array([2.0]), arr(1), arr(0))
    assert le.main_part[0] == 0.0
    assert le.velocity_part[0] == 2.0
    assert le.logE[0] == pytest.approx(5 * math.log(2), rel=1e-15)


def test_logE_at_equilibrium_is_flagged():
    le = lyapunov.eval_logE(lyapunov.paper_nag(6), dynamics.nag(UNIT, 6), np.array([2.0]), arr(0), arr(0))
    assert le.sign[0] == 0 and le.logE[0] == -np.inf


def test_logE_state_wrapper():
    sys_ = dynamics.nag(UNIT, 3)
    le = lyapunov.eval_logE_state(lyapunov.paper_nag(3), sys_, dynamics.State(2.0, np.array([1.0]), np.zeros(1)))
    # g = 0 at r = 3: main part is the gap itself
    assert le.main_part[0] == 0.5


def test_dEdt_hand_example():
    # -10^4 [ (12/10)(1/2) - (432 - 108)/27000 ] = -1880
    rate = lyapunov.analytic_dEdt(lyapunov.paper_nag(6), dynamics.nag(UNIT, 6), np.array([10.0]), arr(1), arr(0))
    assert rate.sign[0] == -1
    assert math.exp(rate.log_magnitude[0]) == pytest.approx(1880.0, rel=1e-12)


def test_dEdt_hand_example_by_finite_differences():
    # independent check: d/dt of E along the exact flow through this state
    lyap, sys_ = lyapunov.paper_nag(6), dynamics.nag(UNIT, 6)
    traj = integrator.integrate(sys_, 10.0, [1.0], [0.0], t_end=10.5, tol=(1e-13, 1e-30))
    h = 1e-3
    E = [math.exp(lyapunov.eval_logE(lyap, sys_, np.array([s]), *traj.state_at([s])).logE[0])
         for s in (10.0, 10.0 + h, 10.0 + 2 * h)]
    fd = (-3 * E[0] + 4 * E[1] - E[2]) / (2 * h)
    assert fd == pytest.approx(-1880.0, rel=1e-5)


def test_dEdt_vanishes_at_equilibrium():
    rate = lyapunov.analytic_dEdt(lyapunov.paper_nag(6), dynamics.nag(UNIT, 6), np.array([3.0]), arr(0), arr(0))
    assert rate.sign[0] == 0


@given(st.floats(0.2, 30), st.lists(st.floats(-3, 3), min_size=8, max_size=8))
@settings(max_examples=60)
def test_closed_forms_match_collection(t, xv):
    # the closed-form path and the discovered-spec path must agree
    obj = objectives.quadratic([1, 2, 5, 10])
    dx, v = np.array([xv[:4]]), np.array([xv[4:]])
    for sys_ in (dynamics.nag(obj, 5), dynamics.generalized_nag(obj, 3, Q(1, 2))):
        paper = lyapunov.for_system(sys_)
        disc = lyapunov.LyapunovSpec(paper.gamma_prime, paper.g, paper.h, "discovered", paper.threshold)
        a = lyapunov.analytic_dEdt(paper, sys_, np.array([t]), dx, v)
        b = lyapunov.analytic_dEdt(disc, sys_, np.array([t]), dx, v)
        assert a.sign[0] == b.sign[0]
        if a.sign[0] != 0:
            assert a.log_magnitude[0] == pytest.approx(b.log_magnitude[0], abs=1e-9)


def test_spec_json_round_trip():
    s = lyapunov.paper_alpha(3, Q(1, 2), 1)
    back = lyapunov.LyapunovSpec.from_json(s.to_json())
    assert back == s and back.threshold == Radical(2) and back.provenance == "paper-alpha"


def test_mutation_keeps_threshold():
    s = lyapunov.paper_nag(6, 1)
    m = lyapunov.mutate(s, g_scale=2)
    assert m.g == s.g * 2 and m.threshold == s.threshold and m.provenance == "custom"
    assert lyapunov.mutate(s) is s


def test_for_system_rejects_first_order():
    with pytest.raises(InputError):
        lyapunov.for_system(dynamics.gradient_flow(UNIT))


def test_span_must_contain_T():
    traj, lyap = run(6, None, t_end=2.0, samples=50)  # T = sqrt(8)
    with pytest.raises(InputError):
        lyapunov.certify_monotone(traj, lyap)


def test_nag4_monotone(paper_runs):
    traj, lyap = paper_runs["nag r=4"]
    assert lyapunov.certify_monotone(traj, lyap, tol=1e-8).passed


def test_alpha_monotone(paper_runs):
    traj, lyap = paper_runs["alpha r=3 a=1/2"]
    rep = lyapunov.certify_monotone(traj, lyap, tol=1e-8)
    assert rep.passed and rep.max_violation < 0


def test_doubled_g_breaks_monotonicity(paper_runs):
    traj, lyap = paper_runs["alpha r=3 a=1/2"]
    bad = lyapunov.mutate(lyap, g_scale=2)
    rep = lyapunov.certify_monotone(traj, bad, tol=1e-8)
    assert not rep.passed and rep.max_violation > 0
    T = lyapunov.threshold_T(bad, traj.system)
    keep = traj.t >= T
    rate = lyapunov.analytic_dEdt(bad, traj.system, traj.t[keep], traj.dx[keep], traj.v[keep])
    assert np.any(rate.sign > 0)


def test_main_part_nonnegative(paper_runs):
    for label in ("nag r=6", "nag r=3"):
        traj, lyap = paper_runs[label]
        assert lyapunov.certify_main_nonneg(traj, lyap).passed


def test_main_part_before_T_is_informational(paper_runs):
    traj, lyap = paper_runs["nag r=6"]
    T = lyapunov.threshold_T(lyap, traj.system)
    rep = lyapunov.certify_main_nonneg(traj, lyap, t_min=T / 2)
    assert rep.inequality_id == "main-nonneg-informational"
    assert all(r.inequality_id != rep.inequality_id for r in lyapunov.certify_all(traj, lyap))


@pytest.mark.parametrize("label", ["nag r=4", "nag r=6", "alpha r=3 a=1/2"])
def test_velocity_bound(paper_runs, label):
    assert lyapunov.certify_velocity_bound(*paper_runs[label]).passed


def test_velocity_part_below_E_at_T(paper_runs):
    traj, lyap = paper_runs["nag r=6"]
    T = lyapunov.threshold_T(lyap, traj.system)
    dx, v = traj.state_at([T])
    le = lyapunov.eval_logE(lyap, traj.system, np.array([T]), dx, v)
    assert le.velocity_part[0] <= le.main_part[0] + le.velocity_part[0]
    assert le.main_part[0] > 0


@pytest.mark.parametrize("label", ["nag r=3", "nag r=6", "alpha r=3 a=1/2"])
def test_rate_bound(paper_runs, label):
    assert lyapunov.certify_rate_bound(*paper_runs[label]).passed


def test_rate_bound_remainder_vanishes_at_r3(paper_runs):
    rb = lyapunov.rate_bound(*paper_runs["nag r=3"])
    for name, values in rb.terms.items():
        if name.startswith("g"):
            assert np.all(values == 0.0)
    np.testing.assert_allclose(rb.log_bound, np.log(rb.terms["E(T) exp(-gamma)"]), rtol=0, atol=1e-14)


def test_y_growth(paper_runs):
    assert lyapunov.certify_y_growth(*paper_runs["nag r=4"]).passed


def test_y_identity_at_random_samples(paper_runs):
    traj, lyap = paper_runs["nag r=4"]
    rng = np.random.default_rng(7)
    times = rng.uniform(3.0, 90.0, 5)
    assert np.all(lyapunov.y_identity_residuals(traj, lyap, times) <= 1e-5)


def test_y_growth_at_equilibrium():
    sys_ = dynamics.nag(objectives.quadratic([1, 2]), 4)
    lyap = lyapunov.for_system(sys_)
    grid = integrator.geometric_grid(0.1, 20, 200, [lyapunov.threshold_T(lyap, sys_)])
    traj = integrator.integrate(sys_, 0.1, np.zeros(2), np.zeros(2), t_end=20, sample_grid=grid)
    assert np.all(traj.dx == 0)
    assert lyapunov.certify_y_growth(traj, lyap).passed


def test_derivative_match(paper_runs):
    rep = lyapunov.certify_derivative(*paper_runs["nag r=6"])
    assert rep.passed and rep.samples_checked > 100


def test_discovered_spec_certifies():
    top = symsearch.search(PowerSum.monomial(5, -1), [Q(-2), Q(-1), Q(0)], 1)[0]
    traj, lyap = run(5, None, lyap=top.spec, samples=800)
    assert all(r.passed for r in lyapunov.certify_all(traj, lyap))


def test_report_files(tmp_path, paper_runs):
    traj, lyap = paper_runs["nag r=4"]
    reps = [lyapunov.certify_monotone(traj, lyap), lyapunov.certify_velocity_bound(traj, lyap)]
    lyapunov.write_reports(reps, tmp_path / "r.json", tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "inequality_id,pass,max_violation,location"
    assert lines[1].startswith("monotone,True,")
    import json
    data = json.loads((tmp_path / "r.json").read_text())["reports"][0]
    assert set(data) >= {"inequality_id", "samples_checked", "max_violation",
                         "violation_location", "tolerance", "pass"}
