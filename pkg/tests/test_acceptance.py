"""Acceptance gate: one test per criterion, each reported as a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or directly with ``python tests/test_acceptance.py``.
"""

import functools
import math
import time

import numpy as np
import pytest

from etclab import analysis as an
from etclab.hybridsim import ZenoSuspicion, simulate
from etclab.kfun import NoPositiveMasp, REGISTRY, masp
from etclab.systems import build_scenario
from etclab.triggers import PeriodicLaw

RESULTS: dict = {}


def record(key, label):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*a, **kw):
            try:
                detail = fn(*a, **kw)
            except BaseException as exc:
                RESULTS[key] = (label, False, f"{type(exc).__name__}: {exc}".splitlines()[0])
                raise
            RESULTS[key] = (label, True, detail or "")
        return wrapper
    return deco


def _timed(sc):
    t0 = time.perf_counter()
    r = simulate(sc)
    return r, time.perf_counter() - t0


@record(1, "example 1 reproduction")
def test_c01_example1_reproduction():
    r, dt = _timed(build_scenario("example1"))
    x, th = r.trace.w[-1]
    assert r.trace.t[-1] == 50.0
    assert abs(x) < 1e-3
    assert abs(th - 0.1534) < 0.02
    assert 0 < len(r.events) < 10**6
    assert r.diagnostics["min_interval"] > 1e-6
    assert dt < 30.0
    return f"|x|={abs(x):.2e} |th-theta|={abs(th - 0.1534):.2e} events={len(r.events)} {dt:.1f}s"


@record(2, "example 2 reproduction")
def test_c02_example2_reproduction():
    r, dt = _timed(build_scenario("example2"))
    w = r.trace.w
    assert np.linalg.norm(w[-1, :2]) < 1e-3
    th = w[:, 2]
    assert np.all(np.diff(th) >= 0)
    assert np.all(np.isfinite(th)) and th.max() < 1e3
    assert r.diagnostics["min_interval"] > 1e-6
    assert dt < 30.0
    return f"|(z,x)|={np.linalg.norm(w[-1, :2]):.2e} theta_hat={th[-1]:.4f} {dt:.1f}s"


@record(3, "Lyapunov decrease")
def test_c03_lyapunov_decrease(ex1):
    sc, r = ex1
    V = sc.certificates.V_bar
    rec = an.check_lyapunov_decrease(r.trace, V, events=r.events, rtol=1e-6)
    assert rec.passed
    assert rec.detail["tol"] == pytest.approx(1e-6 * rec.detail["V0"])
    rows = np.flatnonzero(r.trace.event)[1:]
    drop = [V(r.trace.w[i], vm) - V(r.trace.w[i], r.trace.varpi[i])
            for i, vm in zip(rows, r.events.varpi_minus)]
    assert len(drop) == len(r.events) and min(drop) > 0
    return f"worst slack={rec.worst_margin:.2e} min event drop={min(drop):.2e}"


@record(4, "BIBS window inequality")
def test_c04_bibs(robust):
    sc, r = robust
    c = sc.certificates
    rec = an.check_bibs(r.trace, r.events, c.alpha_w, c.sigma_w, c.bibs_state, tol=1e-8)
    assert rec.passed and rec.detail["checked"] == len(r.events) + 1
    return f"windows={rec.detail['checked']} worst slack={rec.worst_margin:.2e}"


@record(5, "asymptotic inter-event interval")
def test_c05_asymptotic_interval(scalar_t1):
    sc, r = scalar_t1
    s = an.interevent_stats(r.events, 0.125)
    assert s["tail_count"] >= 50
    assert abs(s["tail_mean"] - 0.125) / 0.125 < 0.05
    return f"tail mean={s['tail_mean']:.6f} over {s['tail_count']} events"


@record(6, "MASP and periodic invariance")
def test_c06_masp(scalar_masp):
    res = masp(REGISTRY["half_square"], REGISTRY["square_plus_quartic"], 1.0)
    assert abs(res.period_T - 0.125) <= 1e-6
    sc, r = scalar_masp
    assert sc.trigger.T == res.period_T
    shadow = an.check_shadow(r.trace)
    assert shadow.passed and np.all(r.trace.shadow_margin[~r.trace.event] < 0)
    bound = an.check_varpi_bound(r.trace, r.events, 1.0)
    assert bound.passed
    return f"T={res.period_T:.10f} max shadow margin={-shadow.worst_margin:.2e}"


@record(7, "disturbance robustness")
def test_c07_disturbance():
    bounds = []
    for d in (0.1, 0.01):
        sc = build_scenario("example1_disturbed", {"d_bar": d})
        try:
            r = simulate(sc)
        except ZenoSuspicion as exc:
            pytest.fail(f"Zeno abort at d_bar={d}: {exc}")
        assert r.termination == "t_end"
        bounds.append(an.ultimate_bound(r.trace, 0.2, lambda w: w[:1]))
    assert all(math.isfinite(b) for b in bounds)
    assert bounds[1] <= bounds[0]
    return f"ultimate bounds {bounds[0]:.3e} -> {bounds[1]:.3e}"


@record(8, "numerical integrity")
def test_c08_numerical_integrity(ex1):
    base = build_scenario("example1")
    finals = []
    for h in (0.01, 0.005, 0.0025):
        sc = base.with_trigger(PeriodicLaw(0.05)).with_sim(h=h, T_end=10.0, stop_epsilon=0.0)
        finals.append(simulate(sc, record=False).trace.w[-1])
    ratio = np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2])
    assert 12 <= ratio <= 20
    sc, r = ex1
    assert r.diagnostics["max_bracket"] <= 1e-9
    assert np.all(np.abs(r.events.margin) <= sc.sim.event_tol)
    return f"Richardson ratio={ratio:.2f} max bracket={r.diagnostics['max_bracket']:.2e}"


@record(9, "oracle equivalence")
def test_c09_oracle_equivalence():
    sc = build_scenario("example1")
    per = simulate(sc.with_trigger(PeriodicLaw(sc.sim.h)))
    oracle = an.continuous_oracle(sc)
    diff = float(np.max(np.abs(per.trace.w[-1] - oracle.w[-1])))
    assert per.trace.t[-1] == pytest.approx(oracle.t[-1], abs=1e-9) == 50.0
    assert diff < 1e-4
    return f"final-state difference={diff:.2e}"


@record(10, "negative controls")
def test_c10_negative_controls(ex1, robust):
    sc, r = ex1
    tr = r.trace.copy()
    tr.w[4000, 0] += 0.5
    assert not an.check_lyapunov_decrease(tr, sc.certificates.V_bar, events=r.events).passed
    ev = r.trace.event
    row = next(i for i in range(2000, 3000) if not ev[i - 1:i + 2].any())
    tr = r.trace.copy()
    tr.varpi[row] += 0.05
    assert not an.check_udot(tr, sc.certificates.udot_bound, sc.certificates.U).passed
    sc, r = robust
    c = sc.certificates
    tr = r.trace.copy()
    tr.varpi[500] = 50.0
    assert not an.check_bibs(tr, r.events, c.alpha_w, c.sigma_w, c.bibs_state).passed
    with pytest.raises(NoPositiveMasp):
        masp(REGISTRY["half_square"], REGISTRY["linear"], 1.0)
    return "lyapunov, udot, bibs and MASP small-o all rejected"


def summary_lines() -> list:
    lines = []
    for key in sorted(RESULTS):
        label, ok, detail = RESULTS[key]
        lines.append(f"[{'PASS' if ok else 'FAIL'}] criterion {key:2d} {label}: {detail}")
    return lines


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
