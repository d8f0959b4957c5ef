import json

import numpy as np
import pytest

from etclab import analysis as an
from etclab.hybridsim import (EventLog, read_events_csv, read_trace_csv, simulate,
                              write_events_csv, write_trace_csv)
from etclab.systems import ConfigurationError, build_scenario, scalar_scenario
from etclab.triggers import PeriodicLaw


def _corrupt(trace, **cols):
    tr = trace.copy()
    for name, (row, value) in cols.items():
        getattr(tr, name)[row] = value
    return tr


# -- Lyapunov ----------------------------------------------------------------

def test_lyapunov_zero_trajectory():
    sc = build_scenario("example1", {"theta_true": 0.0, "x0": 0.0}, {"T_end": 1.0})
    r = simulate(sc)
    rec = an.check_lyapunov_decrease(r.trace, sc.certificates.V_bar, events=r.events)
    assert rec.passed and rec.worst_margin == 0.0


def test_lyapunov_reference_run(ex1):
    sc, r = ex1
    rec = an.check_lyapunov_decrease(r.trace, sc.certificates.V_bar, events=r.events)
    assert rec.passed
    assert rec.detail["tol"] == pytest.approx(1e-6 * rec.detail["V0"])


def test_lyapunov_corrupted_row_fails_at_that_row(ex1):
    sc, r = ex1
    row = 4000
    w = r.trace.w[row].copy()
    w[0] += 0.5
    tr = _corrupt(r.trace, w=(row, w))
    rec = an.check_lyapunov_decrease(tr, sc.certificates.V_bar, events=r.events)
    assert not rec.passed and rec.worst_margin < 0
    assert rec.location == r.trace.t[row]


# -- BIBS ----------------------------------------------------------------------

def test_bibs_zero_error_passes():
    sc = build_scenario("robust", {"x0": 0.0, "z0": 0.0}, {"T_end": 0.5})
    r = simulate(sc)
    c = sc.certificates
    rec = an.check_bibs(r.trace, r.events, c.alpha_w, c.sigma_w, c.bibs_state)
    assert rec.passed


def test_bibs_robust_and_example1(robust, ex1):
    for sc, r in (robust, ex1):
        c = sc.certificates
        assert an.check_bibs(r.trace, r.events, c.alpha_w, c.sigma_w, c.bibs_state).passed


def test_bibs_spike_fails(robust):
    sc, r = robust
    c = sc.certificates
    row = 500
    tr = _corrupt(r.trace, varpi=(row, np.array([50.0])))
    rec = an.check_bibs(tr, r.events, c.alpha_w, c.sigma_w, c.bibs_state)
    assert not rec.passed
    assert rec.location == float(tr.window_ids()[row] - 1)


# -- U-dot ---------------------------------------------------------------------

def test_udot_reference_runs(ex1, robust):
    sc, r = ex1
    assert an.check_udot(r.trace, sc.certificates.udot_bound, sc.certificates.U).passed
    sc, r = robust
    c = sc.certificates
    assert an.check_assumption1_udot(r.trace, lambda s: 0.5 * s * s, c.alpha_w, c.sigma_w,
                                     c.bibs_state).passed


def test_udot_zero_error_passes():
    sc = build_scenario("example1", {"theta_true": 0.0, "x0": 0.0}, {"T_end": 0.5})
    r = simulate(sc)
    rec = an.check_udot(r.trace, sc.certificates.udot_bound, sc.certificates.U)
    assert rec.passed


def test_udot_spike_fails(ex1):
    sc, r = ex1
    ev = r.trace.event
    row = next(i for i in range(2000, 3000) if not ev[i - 1:i + 2].any())
    tr = _corrupt(r.trace, varpi=(row, r.trace.varpi[row] + 0.05))
    assert not an.check_udot(tr, sc.certificates.udot_bound, sc.certificates.U).passed


def _fd_error(h):
    a, k = 0.1, 0.3
    sc = scalar_scenario(a, k, trigger=PeriodicLaw(0.125), T_end=2.0, h=h, stop_epsilon=0.0)
    tr = simulate(sc).trace
    rows, est, _ = an.udot_fd(tr, lambda p: 0.5 * float(p @ p))
    x, u = tr.w[rows, 0], tr.u[rows, 0]
    varpi = u + k * x
    exact = varpi * k * (a * x + u)
    return np.max(np.abs(est - exact))


def test_udot_finite_difference_is_second_order():
    e1, e2 = _fd_error(2e-3), _fd_error(1e-3)
    assert 3.0 <= e1 / e2 <= 5.0


# -- trigger-level -------------------------------------------------------------

def test_trigger_margins(ex1):
    sc, r = ex1
    assert an.check_trigger_margins(r.trace, r.events, sc.trigger).passed
    ev = EventLog(r.events.k, r.events.t, r.events.interval, r.events.margin.copy(),
                  r.events.varpi_minus)
    ev.margin[10] = 1e-6
    assert not an.check_trigger_margins(r.trace, ev, sc.trigger).passed


def test_trigger_margins_periodic(scalar_masp):
    sc, r = scalar_masp
    assert an.check_trigger_margins(r.trace, r.events, sc.trigger).passed
    assert not an.check_trigger_margins(r.trace, r.events, PeriodicLaw(0.1)).passed


def test_zeno_check(ex1):
    sc, r = ex1
    assert an.check_zeno(r.events).passed
    ev = EventLog(r.events.k, r.events.t, r.events.interval.copy(), r.events.margin,
                  r.events.varpi_minus)
    ev.interval[3] = 1e-9
    assert not an.check_zeno(ev).passed


def test_shadow_check(scalar_masp):
    sc, r = scalar_masp
    assert an.check_shadow(r.trace).passed
    tr = _corrupt(r.trace, shadow_margin=(5, 0.0))
    assert not an.check_shadow(tr).passed
    with pytest.raises(ConfigurationError):
        an.check_shadow(simulate(build_scenario("scalar_event", sim={"T_end": 0.3})).trace)


def test_varpi_bound(scalar_masp):
    sc, r = scalar_masp
    assert an.check_varpi_bound(r.trace, r.events, 1.0).passed
    assert not an.check_varpi_bound(r.trace, r.events, 1e-3).passed


def test_accumulator_check(ex1):
    sc, r = ex1
    assert an.check_accumulators(r.trace).passed
    row = 300
    assert not r.trace.event[row]
    tr = _corrupt(r.trace, sup_varpi=(row, r.trace.sup_varpi[row] + 1.0))
    assert not an.check_accumulators(tr).passed


def test_monotone_check(ex2):
    sc, r = ex2
    assert an.check_monotone(r.trace, 2).passed
    w = r.trace.w[100].copy()
    w[2] -= 1.0
    assert not an.check_monotone(_corrupt(r.trace, w=(100, w)), 2).passed


# -- statistics ----------------------------------------------------------------

def test_interevent_periodic():
    r = simulate(scalar_scenario(trigger=PeriodicLaw(0.01), T_end=1.0, stop_epsilon=0.0))
    s = an.interevent_stats(r.events)
    for key in ("min", "mean", "tail_mean"):
        assert s[key] == pytest.approx(0.01, abs=1e-12)


def test_interevent_asymptotic(scalar_t1):
    sc, r = scalar_t1
    s = an.interevent_stats(r.events, 0.125)
    assert s["asymptotic_check"] is True and s["tail_count"] >= 50


def test_interevent_square_plus_cube_tends_to_quarter():
    sc = build_scenario("scalar_event", {"gamma": "square_plus_cube"}, {"T_end": 100.0})
    r = simulate(sc)
    s = an.interevent_stats(r.events, sc.certificates.asymptotic_reference)
    assert sc.certificates.asymptotic_reference == pytest.approx(0.25, rel=1e-9)
    assert s["asymptotic_check"] is True


def test_interevent_degenerate():
    r = simulate(scalar_scenario(trigger=PeriodicLaw(0.6), T_end=1.0))
    s = an.interevent_stats(r.events, 0.6)
    assert s["count"] == 1 and s["applicable"] is False


def test_interevent_short_tail_skipped():
    r = simulate(scalar_scenario(trigger=PeriodicLaw(0.1), T_end=2.0))
    assert an.interevent_stats(r.events, 0.1)["asymptotic_check"] == "skipped"


def test_ultimate_bound_undisturbed(ex1):
    sc, r = ex1
    assert an.ultimate_bound(r.trace, 0.2, lambda w: w[:1]) <= sc.sim.stop_epsilon
    with pytest.raises(ValueError):
        an.ultimate_bound(r.trace, 1.0)


# -- oracle --------------------------------------------------------------------

def test_oracle_converges(ex1):
    sc, r = ex1
    o = an.continuous_oracle(sc)
    assert abs(o.w[-1, 0]) < 1e-3 and abs(o.w[-1, 1] - 0.1534) < 0.02
    assert abs(r.trace.w[-1, 0]) < 1e-3
    assert np.all(o.varpi == 0.0)


def test_oracle_equilibrium():
    sc = build_scenario("robust", {"x0": 0.0, "z0": 0.0}, {"T_end": 1.0})
    assert np.all(an.continuous_oracle(sc).w == 0.0)


def test_oracle_validates_example2_constants():
    sc = build_scenario("example2")
    o = an.continuous_oracle(sc)
    assert np.linalg.norm(o.w[-1, :2]) < 1e-3


# -- report --------------------------------------------------------------------

def test_report_requested_checks_once_and_signs(ex1):
    sc, r = ex1
    rep = an.analyze_result(sc, r)
    names = [c.name for c in rep.checks]
    assert names == an.default_checks(sc) and len(set(names)) == len(names)
    for c in rep.checks:
        assert c.passed == (c.worst_margin >= 0)
    d = json.loads(rep.to_json())
    assert set(d) == {"scenario", "termination", "passed", "checks", "stats"}


def test_report_rejects_bad_requests(ex1):
    sc, r = ex1
    with pytest.raises(ConfigurationError):
        an.analyze_result(sc, r, ["nope"])
    with pytest.raises(ConfigurationError):
        an.analyze_result(sc, r, ["shadow"])
    with pytest.raises(ConfigurationError):
        an.analyze_result(sc, r, ["zeno", "zeno"])


def test_analysis_of_stored_trace_is_bit_exact(tmp_path, ex2):
    sc, r = ex2
    write_trace_csv(r.trace, tmp_path / "t.csv")
    write_events_csv(r.events, tmp_path / "e.csv")
    live = an.analyze(sc, r.trace, r.events, "x").to_json()
    stored = an.analyze(sc, read_trace_csv(tmp_path / "t.csv"),
                        read_events_csv(tmp_path / "e.csv"), "x").to_json()
    assert live == stored


def test_masp_periodic_twin_passes_same_checks():
    ev = build_scenario("scalar_event")
    per = build_scenario("scalar_masp")
    common = ["lyapunov", "triggers", "zeno", "accumulators"]
    assert an.analyze_result(ev, simulate(ev), common).passed
    assert an.analyze_result(per, simulate(per), common).passed
