"""Certificate checks, inter-event statistics and the continuous baseline.

Every check is a pure function of a trace, an event log and certificate
functions, so rerunning analysis on a stored trace reproduces the report.
A check record's ``worst_margin`` is the smallest slack (bound plus
tolerance minus observed value); the check passes iff it is nonnegative.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .hybridsim import DynamicsBlowUp, EventLog, SimResult, Trace, rk4
from .triggers import PeriodicLaw
from .systems import ConfigurationError, Scenario


@dataclass
class CheckRecord:
    name: str
    passed: bool
    worst_margin: float
    location: Optional[float] = None
    detail: dict = field(default_factory=dict)


def _record(name, slack, where, detail=None) -> CheckRecord:
    """Build a record from an array of slacks and matching locations."""
    slack = np.asarray(slack, dtype=float)
    if slack.size == 0:
        return CheckRecord(name, True, 0.0, None, {"checked": 0, **(detail or {})})
    i = int(np.argmin(slack))
    worst = float(slack[i])
    loc = float(where[i]) if where is not None else None
    d = {"checked": int(slack.size), "violations": int(np.sum(slack < 0)), **(detail or {})}
    return CheckRecord(name, bool(worst >= 0), worst, loc, d)


def _event_rows(trace: Trace) -> np.ndarray:
    """Trace rows of logged events (row 0 opens the first window but is not an event)."""
    rows = np.flatnonzero(trace.event)
    return rows[rows > 0]


def _norms(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.abs(a) if a.ndim == 1 else np.sqrt(np.sum(a * a, axis=1))


# -- Lyapunov ---------------------------------------------------------------

def check_lyapunov_decrease(trace: Trace, V_bar: Callable, tol: Optional[float] = None,
                            events: Optional[EventLog] = None, rtol: float = 1e-6) -> CheckRecord:
    """``V(t_{i+1}) <= V(t_i) + tol`` row to row, and ``V(t_k+) <= V(t_k-)`` at events.

    ``tol`` defaults to ``rtol * V(t0)``. The pre-reset value at an event
    uses the logged sampling error just before the reset.
    """
    V = np.array([V_bar(w, p) for w, p in zip(trace.w, trace.varpi)])
    if tol is None:
        tol = rtol * abs(float(V[0]))
    slack = V[:-1] + tol - V[1:]
    where = trace.t[1:]
    detail = {"tol": tol, "V0": float(V[0])}
    if events is not None and len(events):
        rows = _event_rows(trace)[:len(events)]
        V_minus = np.array([V_bar(trace.w[r], vm) for r, vm in
                            zip(rows, events.varpi_minus.reshape(len(events), -1)[:len(rows)])])
        jump = V_minus - V[rows]
        slack = np.concatenate([slack, jump])
        where = np.concatenate([where, trace.t[rows]])
        detail["min_event_drop"] = float(np.min(jump)) if jump.size else None
    return _record("lyapunov", slack, where, detail)


# -- window suprema ------------------------------------------------------------

def _window_sups(trace: Trace, values: np.ndarray, closing: Optional[np.ndarray]):
    """Per-window max of ``values``, folded with the closing pre-reset value if given."""
    starts = np.flatnonzero(trace.event)
    if starts.size == 0 or starts[0] != 0:
        starts = np.concatenate([[0], starts])
    sups = np.maximum.reduceat(values, starts)
    if closing is not None and closing.size:
        n = min(len(closing), len(sups))
        sups[:n] = np.maximum(sups[:n], closing[:n])
    return starts, sups


def check_bibs(trace: Trace, events: Optional[EventLog], alpha_w: Callable, sigma_w: Callable,
               state: Optional[Callable] = None, tol: float = 1e-8) -> CheckRecord:
    """``alpha_w(sup|varpi|) <= sigma_w(sup|state|) + tol`` on every window.

    Each window covers ``[t_k, t_{k+1}]``: the closing event contributes the
    sampling error just before the reset and the state at the event time.
    """
    xi = trace.w if state is None else np.array([np.atleast_1d(state(w)) for w in trace.w])
    xi_norm = _norms(xi)
    vp_norm = _norms(trace.varpi)
    rows = _event_rows(trace)
    vm = _norms(events.varpi_minus.reshape(len(events), -1)) if events is not None and len(events) else None
    starts, sup_v = _window_sups(trace, vp_norm, vm)
    _, sup_x = _window_sups(trace, xi_norm, xi_norm[rows] if rows.size else None)
    lhs = np.array([float(alpha_w(v)) for v in sup_v])
    rhs = np.array([float(sigma_w(v)) for v in sup_x])
    rec = _record("bibs", rhs + tol - lhs, np.arange(len(starts), dtype=float), {"tol": tol})
    rec.detail["location_kind"] = "window"
    return rec


# -- U-dot --------------------------------------------------------------------

def udot_fd(trace: Trace, U: Callable):
    """Central nonuniform finite differences of ``U(varpi(t))`` inside windows.

    Returns ``(rows, estimates, skipped_windows)``; a row is a stencil center
    whose neighbours belong to the same window and which is not an event row.
    """
    Uv = np.array([float(U(p)) for p in trace.varpi])
    wid = trace.window_ids()
    n = len(trace)
    if n < 3:
        return np.zeros(0, dtype=int), np.zeros(0), int(wid[-1]) if n else 0
    c = np.arange(1, n - 1)
    ok = (wid[c - 1] == wid[c]) & (wid[c + 1] == wid[c]) & ~trace.event[c]
    c = c[ok]
    h1 = trace.t[c] - trace.t[c - 1]
    h2 = trace.t[c + 1] - trace.t[c]
    est = (h1 * h1 * Uv[c + 1] - h2 * h2 * Uv[c - 1] + (h2 * h2 - h1 * h1) * Uv[c]) \
        / (h1 * h2 * (h1 + h2))
    skipped = int(len(np.unique(wid)) - len(np.unique(wid[c])))
    return c, est, skipped


def check_udot(trace: Trace, bound: Callable, U: Callable, h: Optional[float] = None,
               name: str = "udot") -> CheckRecord:
    """``dU/dt <= bound(w, varpi) + 10 h**2 scale`` at every stencil center."""
    rows, est, skipped = udot_fd(trace, U)
    if rows.size == 0:
        return CheckRecord(name, True, 0.0, None, {"checked": 0, "skipped_windows": skipped})
    if h is None:
        h = float(np.max(np.diff(trace.t)))
    b = np.array([float(bound(trace.w[r], trace.varpi[r])) for r in rows])
    scale = 1.0 + float(np.max(np.abs(b)))
    tol_fd = 10.0 * h * h * scale
    return _record(name, b + tol_fd - est, trace.t[rows],
                   {"tol_fd": tol_fd, "skipped_windows": skipped})


def _radial(U: Callable) -> Callable:
    return lambda p: U(math.sqrt(float(np.dot(p, p))))


def check_assumption1_udot(trace: Trace, U: Callable, alpha_w: Callable, sigma_w: Callable,
                           state: Optional[Callable] = None) -> CheckRecord:
    """``dU/dt <= alpha_w(|varpi|) + sigma_w(|state|)``; ``U`` acts on ``|varpi|``."""
    return check_udot(trace, _sum_bound(alpha_w, sigma_w, state), _radial(U), name="udot")


# -- trigger-level checks -----------------------------------------------------

def check_trigger_margins(trace: Trace, events: EventLog, law, tol: float = 1e-9) -> CheckRecord:
    """Interior margins stay below ``tol``; fire margins are within ``tol`` of zero.

    For a periodic law every interval must equal the period to rounding.
    """
    if isinstance(law, PeriodicLaw):
        if not len(events):
            return CheckRecord("triggers", True, 0.0, None, {"checked": 0})
        err = np.abs(events.interval - law.T)
        lim = 1e-12 * np.maximum(1.0, np.abs(events.t))
        return _record("triggers", lim - err, events.t, {"period": law.T})
    interior = ~trace.event
    slack = [tol - trace.margin[interior]]
    where = [trace.t[interior]]
    if len(events):
        slack.append(tol - np.abs(events.margin))
        where.append(events.t)
    return _record("triggers", np.concatenate(slack), np.concatenate(where), {"tol": tol})


def check_zeno(events: EventLog, event_tol: float = 1e-9) -> CheckRecord:
    """Minimum inter-event interval exceeds ten times the location tolerance."""
    if not len(events):
        return CheckRecord("zeno", True, 0.0, None, {"checked": 0, "n_events": 0})
    floor = 10.0 * event_tol
    rec = _record("zeno", events.interval - floor, events.t, {"floor": floor})
    rec.detail.update(n_events=len(events), min_interval=float(np.min(events.interval)))
    return rec


def check_shadow(trace: Trace) -> CheckRecord:
    """The co-evaluated event-law margin is strictly negative inside every window."""
    interior = ~trace.event
    g = trace.shadow_margin[interior]
    if np.all(np.isnan(g)):
        raise ConfigurationError("trace carries no shadow margin")
    rec = _record("shadow", -g, trace.t[interior])
    # Strict inequality: a zero margin is a failure.
    if rec.detail["checked"] and rec.worst_margin <= 0:
        rec.passed = False
    return rec


def check_varpi_bound(trace: Trace, events: Optional[EventLog], R0: float) -> CheckRecord:
    """``|varpi(t)| <= R0`` throughout, including just before each reset."""
    v = _norms(trace.varpi)
    slack, where = [R0 - v], [trace.t]
    if events is not None and len(events):
        slack.append(R0 - _norms(events.varpi_minus.reshape(len(events), -1)))
        where.append(events.t)
    return _record("varpi_bound", np.concatenate(slack), np.concatenate(where), {"R0": R0})


def check_accumulators(trace: Trace) -> CheckRecord:
    """Accumulators are zero at window starts and nondecreasing inside windows."""
    acc = np.column_stack([trace.sup_varpi, trace.max_U, trace.max_weighted])
    same = ~trace.event[1:]
    steps = np.min(acc[1:] - acc[:-1], axis=1)
    slack = [steps[same]]
    where = [trace.t[1:][same]]
    starts = trace.event
    slack.append(-np.max(np.abs(acc[starts]), axis=1))
    where.append(trace.t[starts])
    return _record("accumulators", np.concatenate(slack), np.concatenate(where))


def check_monotone(trace: Trace, index: int, name: str = "estimator_monotone") -> CheckRecord:
    """Component ``index`` of the state is nondecreasing along the trace."""
    col = trace.w[:, index]
    return _record(name, np.diff(col), trace.t[1:])


# -- statistics ---------------------------------------------------------------

def interevent_stats(events: EventLog, reference: Optional[float] = None, radial: bool = True,
                     tail_fraction: float = 0.2, min_tail: int = 10, rtol: float = 0.05) -> dict:
    """Interval statistics; the asymptotic comparison runs only on a long enough tail."""
    n = len(events)
    out = {"applicable": n >= 2, "count": n, "min": None, "mean": None, "tail_mean": None,
           "tail_count": 0, "asymptotic_reference": reference, "relative_error": None,
           "asymptotic_check": None}
    if n < 2:
        return out
    iv = events.interval
    n_tail = int(math.ceil(tail_fraction * n))
    tail = iv[-n_tail:]
    out.update(min=float(np.min(iv)), mean=float(np.mean(iv)),
               tail_mean=float(np.mean(tail)), tail_count=n_tail)
    if reference is not None and radial and math.isfinite(reference) and reference > 0:
        if n_tail >= min_tail:
            rel = abs(out["tail_mean"] - reference) / reference
            out["relative_error"] = rel
            out["asymptotic_check"] = bool(rel < rtol)
        else:
            out["asymptotic_check"] = "skipped"
    return out


def ultimate_bound(trace: Trace, tail_fraction: float = 0.2,
                   state: Optional[Callable] = None) -> float:
    """Largest state norm over the final ``tail_fraction`` of the time span."""
    if not 0 < tail_fraction < 1:
        raise ValueError(f"tail_fraction must lie in (0, 1), got {tail_fraction!r}")
    t0, t1 = float(trace.t[0]), float(trace.t[-1])
    sel = trace.t >= t1 - tail_fraction * (t1 - t0)
    w = trace.w[sel]
    xs = w if state is None else np.array([np.atleast_1d(state(r)) for r in w])
    return float(np.max(_norms(xs)))


# -- oracle -------------------------------------------------------------------

def continuous_oracle(scenario: Scenario, record: bool = True) -> Trace:
    """Same plant and controller with ``u = kappa(y(t))`` inside every RK4 stage."""
    sim = scenario.sim
    kap = scenario.kappa_w
    fld = scenario.field

    def fun(t, w):
        return fld(t, w, kap(w))

    w = np.asarray(sim.w0, dtype=float)
    t = sim.t0
    ts, ws, us = [t], [w], [kap(w)]
    h = sim.h
    eps_t = 1e-12 * max(1.0, abs(sim.T_end))
    while t < sim.T_end - eps_t:
        step = min(h, sim.T_end - t)
        w = rk4(fun, t, w, step)
        if not np.all(np.isfinite(w)):
            raise DynamicsBlowUp(f"dynamics blew up at t={t!r}")
        t = t + step
        if abs(sim.T_end - t) <= eps_t:
            t = sim.T_end
        if record:
            ts.append(t); ws.append(w); us.append(kap(w))
        if sim.stop_epsilon > 0 and float(np.linalg.norm(w)) < sim.stop_epsilon:
            break
    if not record:
        ts.append(t); ws.append(w); us.append(kap(w))
    n = len(ts)
    u = np.array(us)
    ev = np.zeros(n, dtype=bool)
    ev[0] = True
    z = np.zeros(n)
    return Trace(np.array(ts), np.array(ws), u, np.zeros_like(u), z, z.copy(), z.copy(),
                 z.copy(), np.full(n, np.nan), ev)


# -- report -------------------------------------------------------------------

def jsonable(v):
    """Recursively convert numpy scalars and arrays; non-finite floats become None."""
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return jsonable(v.tolist())
    return v


@dataclass
class AnalysisReport:
    scenario: str
    termination: str
    checks: list
    stats: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> CheckRecord:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return jsonable({"scenario": self.scenario, "termination": self.termination,
                       "passed": self.passed,
                       "checks": [asdict(c) for c in self.checks], "stats": self.stats})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


CHECK_NAMES = ("lyapunov", "bibs", "udot", "triggers", "zeno", "accumulators", "shadow",
               "varpi_bound", "estimator_monotone", "interevent")


def default_checks(scenario: Scenario) -> list[str]:
    c = scenario.certificates
    # Decrease and dU/dt bounds are stated for the undisturbed plant.
    clean = scenario.plant.disturbance is None
    out = []
    if c.V_bar is not None and clean:
        out.append("lyapunov")
    if c.alpha_w is not None and c.sigma_w is not None:
        out.append("bibs")
    if clean and (c.udot_bound is not None or (c.alpha_w is not None and c.sigma_w is not None)):
        out.append("udot")
    out += ["triggers", "zeno", "accumulators"]
    if scenario.shadow is not None:
        out.append("shadow")
    if c.R0 is not None:
        out.append("varpi_bound")
    if c.monotone_index is not None:
        out.append("estimator_monotone")
    if c.asymptotic_reference is not None:
        out.append("interevent")
    return out


def _require(cond, check, what):
    if not cond:
        raise ConfigurationError(f"check {check!r} needs certificate {what!r}")


def validate_checks(scenario: Scenario, names: list) -> None:
    """Reject unknown or duplicate names and checks whose certificates are missing."""
    unknown = [n for n in names if n not in CHECK_NAMES]
    if unknown:
        raise ConfigurationError(f"unknown check(s): {', '.join(unknown)}")
    if len(set(names)) != len(names):
        raise ConfigurationError("duplicate check names requested")
    c = scenario.certificates
    pair = c.alpha_w is not None and c.sigma_w is not None
    needs = {
        "lyapunov": (c.V_bar is not None, "V_bar"),
        "bibs": (pair, "alpha_w/sigma_w"),
        "udot": (c.udot_bound is not None or pair, "udot_bound or alpha_w/sigma_w"),
        "shadow": (scenario.shadow is not None, "shadow law"),
        "varpi_bound": (c.R0 is not None, "R0"),
        "estimator_monotone": (c.monotone_index is not None, "monotone_index"),
        "interevent": (c.asymptotic_reference is not None, "asymptotic_reference"),
    }
    for n in names:
        if n in needs:
            _require(needs[n][0], n, needs[n][1])


def analyze(scenario: Scenario, trace: Trace, events: EventLog, termination: str = "",
            checks: Optional[list] = None) -> AnalysisReport:
    """Run the requested checks (default: everything the certificates support)."""
    c = scenario.certificates
    names = default_checks(scenario) if checks is None else list(checks)
    validate_checks(scenario, names)
    state = c.bibs_state
    records = []
    iv = interevent_stats(events, c.asymptotic_reference)
    for name in names:
        if name == "lyapunov":
            rec = check_lyapunov_decrease(trace, c.V_bar, events=events, rtol=c.lyapunov_rtol)
        elif name == "bibs":
            rec = check_bibs(trace, events, c.alpha_w, c.sigma_w, state)
        elif name == "udot":
            if c.udot_bound is not None:
                rec = check_udot(trace, c.udot_bound, c.U)
            else:
                rec = check_udot(trace, _sum_bound(c.alpha_w, c.sigma_w, state), c.U)
        elif name == "triggers":
            rec = check_trigger_margins(trace, events, scenario.trigger, scenario.sim.event_tol)
        elif name == "zeno":
            rec = check_zeno(events, scenario.sim.event_tol)
        elif name == "accumulators":
            rec = check_accumulators(trace)
        elif name == "shadow":
            rec = check_shadow(trace)
        elif name == "varpi_bound":
            rec = check_varpi_bound(trace, events, c.R0)
        elif name == "estimator_monotone":
            rec = check_monotone(trace, c.monotone_index)
        else:
            ok = iv["asymptotic_check"]
            err = iv["relative_error"]
            if ok == "skipped" or ok is None:
                rec = CheckRecord("interevent", True, 0.0, None, {"skipped": True})
            else:
                rec = CheckRecord("interevent", bool(ok), 0.05 - err, None,
                                  {"relative_error": err})
        records.append(rec)
    stats = {"interevent": iv, "convergence": convergence_stats(scenario, trace)}
    return AnalysisReport(scenario.name, termination, records, stats)


def _sum_bound(alpha_w, sigma_w, state):
    def bound(w, p):
        xi = w if state is None else np.atleast_1d(state(w))
        return alpha_w(math.sqrt(float(np.dot(p, p)))) + sigma_w(float(np.linalg.norm(xi)))
    return bound


def convergence_stats(scenario: Scenario, trace: Trace) -> dict:
    w_end = trace.w[-1]
    x, z, th = scenario.split(w_end)
    out = {"t_final": float(trace.t[-1]),
           "x_final_norm": float(np.linalg.norm(x)),
           "plant_final_norm": float(np.linalg.norm(np.concatenate([x, z]))),
           "theta_error": None, "ultimate_bound": None}
    tt = scenario.certificates.theta_true
    if tt is not None and th.size:
        out["theta_error"] = float(np.linalg.norm(th - tt))
    if scenario.plant.disturbance is not None:
        nx = scenario.plant.n_x
        out["ultimate_bound"] = ultimate_bound(trace, 0.2, lambda w: w[:nx])
    return out


def analyze_result(scenario: Scenario, result: SimResult, checks=None) -> AnalysisReport:
    return analyze(scenario, result.trace, result.events, result.termination, checks)
