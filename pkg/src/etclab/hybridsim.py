"""Impulsive closed-loop integration with event location.

Between samples the plant and estimator flow with the control held at
``u_held``; the sampling error ``varpi = u_held - kappa(y)`` is computed
algebraically, never integrated. The flow uses fixed-step classical RK4.
Trigger accumulators are updated at step endpoints and bisection probes
only, so the running supremum is under-approximated by O(h) when the
sampling error is not monotone inside a step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .triggers import PeriodicLaw, SupNormLaw, WeightedLaw, should_fire


class SimulationError(RuntimeError):
    """Base class for aborted simulations."""

    partial = None


class DynamicsBlowUp(SimulationError):
    pass


class ZenoSuspicion(SimulationError):
    def __init__(self, message: str, min_interval: float):
        super().__init__(message)
        self.min_interval = min_interval


class MissedCrossing(SimulationError):
    pass


@dataclass(frozen=True)
class HybridState:
    t: float
    w: np.ndarray
    u_held: np.ndarray
    last_event_time: float


class WindowAccumulators(NamedTuple):
    """Running maxima over the current window ``[t_k, t]``."""

    sup_varpi: float = 0.0
    max_U: float = 0.0
    max_weighted: float = 0.0

    def updated(self, norm: float, u_val: float, weighted: float) -> "WindowAccumulators":
        return WindowAccumulators(
            norm if norm > self.sup_varpi else self.sup_varpi,
            u_val if u_val > self.max_U else self.max_U,
            weighted if weighted > self.max_weighted else self.max_weighted,
        )


ZERO_ACC = WindowAccumulators()


def _half_square(s):
    return 0.5 * s * s


@dataclass
class Trace:
    """Dense record: one row per accepted step plus one per event (post reset)."""

    t: np.ndarray
    w: np.ndarray
    u: np.ndarray
    varpi: np.ndarray
    sup_varpi: np.ndarray
    max_U: np.ndarray
    max_weighted: np.ndarray
    margin: np.ndarray
    shadow_margin: np.ndarray
    event: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    @property
    def n_w(self) -> int:
        return self.w.shape[1]

    def columns(self) -> list[str]:
        m = self.u.shape[1]
        cols = ["t"] + [f"w{i}" for i in range(self.n_w)]
        cols += ["u"] if m == 1 else [f"u{i}" for i in range(m)]
        cols += ["varpi"] if m == 1 else [f"varpi{i}" for i in range(m)]
        return cols + ["sup_varpi", "max_U", "max_weighted", "margin", "shadow_margin", "event"]

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([
            self.t, self.w, self.u, self.varpi, self.sup_varpi, self.max_U,
            self.max_weighted, self.margin, self.shadow_margin, self.event.astype(float),
        ])

    def copy(self) -> "Trace":
        return Trace(**{k: np.array(v, copy=True) for k, v in self.__dict__.items()})

    def window_ids(self) -> np.ndarray:
        """Window index per row; row 0 and every event row open a new window."""
        return np.cumsum(self.event.astype(int))


@dataclass
class EventLog:
    k: np.ndarray
    t: np.ndarray
    interval: np.ndarray
    margin: np.ndarray
    varpi_minus: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def columns(self) -> list[str]:
        m = self.varpi_minus.shape[1] if self.varpi_minus.ndim == 2 else 1
        vm = ["varpi_minus"] if m == 1 else [f"varpi_minus{i}" for i in range(m)]
        return ["k", "t_k", "interval", "margin"] + vm

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([self.k, self.t, self.interval, self.margin,
                                self.varpi_minus.reshape(len(self.t), -1)])


@dataclass
class SimResult:
    trace: Trace
    events: EventLog
    termination: str
    scenario_name: str = ""
    diagnostics: dict = field(default_factory=dict)


def rk4(fun: Callable, t: float, w: np.ndarray, h: float) -> np.ndarray:
    k1 = fun(t, w)
    k2 = fun(t + 0.5 * h, w + (0.5 * h) * k1)
    k3 = fun(t + 0.5 * h, w + (0.5 * h) * k2)
    k4 = fun(t + h, w + h * k3)
    return w + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _advance(scenario, t: float, w: np.ndarray, u_held: np.ndarray, h: float) -> np.ndarray:
    field_ = scenario.field
    w1 = rk4(lambda tt, ww: field_(tt, ww, u_held), t, w, h)
    if not np.all(np.isfinite(w1)):
        raise DynamicsBlowUp(f"dynamics blew up at t={t!r}")
    return w1


def step(state: HybridState, scenario, h: float) -> HybridState:
    """One RK4 step of the flow with the control held at ``state.u_held``."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h!r}")
    w1 = _advance(scenario, state.t, state.w, state.u_held, h)
    return HybridState(state.t + h, w1, state.u_held, state.last_event_time)


def fire_event(state: HybridState, scenario) -> HybridState:
    """Resample: the held control becomes ``kappa(y(t))`` so ``varpi`` drops to zero."""
    return HybridState(state.t, state.w, scenario.kappa_w(state.w), state.t)


def bisect_event(probe: Callable[[float], tuple], t_lo: float, t_hi: float,
                 time_tol: float = 1e-9, margin_tol: float = 1e-9, max_iter: int = 200):
    """Shrink ``[t_lo, t_hi]`` around the first firing time.

    ``probe(t)`` returns ``(fires, g, payload)``; the interval must satisfy
    ``not fires(t_lo)`` and ``fires(t_hi)``. Returns ``(t_hi, g_hi, payload_hi,
    width)`` once the bracket is at most ``time_tol`` wide and ``g_hi <= margin_tol``.
    """
    fires, g_hi, payload = probe(t_hi)
    if not fires:
        raise MissedCrossing(f"missed crossing: no firing at bracket end t={t_hi!r}")
    floor = 4.0 * np.finfo(float).eps * max(1.0, abs(t_hi))
    width = t_hi - t_lo
    for _ in range(max_iter):
        width = t_hi - t_lo
        if (width <= time_tol and g_hi <= margin_tol) or width <= floor:
            break
        mid = t_lo + 0.5 * width
        f_mid, g_mid, p_mid = probe(mid)
        if f_mid:
            t_hi, g_hi, payload = mid, g_mid, p_mid
        else:
            t_lo = mid
    return t_hi, g_hi, payload, t_hi - t_lo


class _Observer:
    """Evaluates the sampling error and accumulator inputs at a state."""

    def __init__(self, scenario):
        self.scenario = scenario
        law = scenario.trigger
        shadow = scenario.shadow
        if isinstance(law, SupNormLaw):
            self.U = law.U_radial
        elif isinstance(shadow, SupNormLaw):
            self.U = shadow.U_radial
        else:
            self.U = _half_square
        self.gamma_bar = law.gamma_bar if isinstance(law, WeightedLaw) else None

    def __call__(self, w: np.ndarray, u_held: np.ndarray):
        sc = self.scenario
        varpi = u_held - sc.kappa_w(w)
        norm = math.sqrt(float(np.dot(varpi, varpi)))
        u_val = float(self.U(norm))
        if self.gamma_bar is not None:
            x, _, th = sc.split(w)
            weighted = float(self.gamma_bar(x, th, varpi)) * norm * norm
        else:
            weighted = 0.0
        return varpi, norm, u_val, weighted


def locate_event(state_before: HybridState, state_after: HybridState, trigger, scenario,
                 acc_before: WindowAccumulators = ZERO_ACC, observer=None,
                 time_tol: float = 1e-9, margin_tol: float = 1e-9):
    """Bisect the step ``[state_before.t, state_after.t]`` for the firing time.

    Each probe re-integrates from ``state_before`` and folds the probe point
    into a copy of ``acc_before``. Returns ``(t_star, g_star, state, acc, varpi,
    bracket_width)``; the width is zero for clock events.
    """
    t_k = state_before.last_event_time
    if isinstance(trigger, PeriodicLaw):
        t_star = t_k + trigger.T
        h = t_star - state_before.t
        st = step(state_before, scenario, h) if h > 0 else state_before
        st = HybridState(t_star, st.w, st.u_held, t_k)
        obs = (observer or _Observer(scenario))(st.w, st.u_held)
        return t_star, 0.0, st, acc_before.updated(obs[1], obs[2], obs[3]), obs[0], 0.0

    observer = observer or _Observer(scenario)
    guard = scenario.sim.guard_epsilon
    g0 = trigger.margin(state_before.t, t_k, acc_before)
    if should_fire(trigger, g0, acc_before, guard):
        raise MissedCrossing(f"missed crossing: already firing at t={state_before.t!r}")

    def probe(tau):
        h = tau - state_before.t
        w1 = _advance(scenario, state_before.t, state_before.w, state_before.u_held, h)
        varpi, norm, u_val, weighted = observer(w1, state_before.u_held)
        acc = acc_before.updated(norm, u_val, weighted)
        g = trigger.margin(tau, t_k, acc)
        return should_fire(trigger, g, acc, guard), g, (w1, acc, varpi)

    t_star, g_star, (w1, acc, varpi), width = bisect_event(
        probe, state_before.t, state_after.t, time_tol, margin_tol)
    return t_star, g_star, HybridState(t_star, w1, state_before.u_held, t_k), acc, varpi, width


class _Recorder:
    def __init__(self, scenario):
        self.rows: list = []
        self.sc = scenario
        self.shadow = scenario.shadow

    def add(self, st: HybridState, varpi, acc, g, is_event):
        sg = self.shadow.margin(st.t, st.last_event_time, acc) if self.shadow is not None else math.nan
        self.rows.append((st.t, st.w, st.u_held, varpi, acc, g, sg, is_event))

    def trace(self) -> Trace:
        rows = self.rows
        return Trace(
            t=np.array([r[0] for r in rows]),
            w=np.array([r[1] for r in rows]),
            u=np.array([r[2] for r in rows]),
            varpi=np.array([r[3] for r in rows]),
            sup_varpi=np.array([r[4].sup_varpi for r in rows]),
            max_U=np.array([r[4].max_U for r in rows]),
            max_weighted=np.array([r[4].max_weighted for r in rows]),
            margin=np.array([r[5] for r in rows]),
            shadow_margin=np.array([r[6] for r in rows]),
            event=np.array([r[7] for r in rows], dtype=bool),
        )


def _event_log(ev: list, m: int) -> EventLog:
    if not ev:
        return EventLog(np.zeros(0, dtype=int), np.zeros(0), np.zeros(0), np.zeros(0),
                        np.zeros((0, m)))
    return EventLog(
        k=np.array([e[0] for e in ev], dtype=int),
        t=np.array([e[1] for e in ev]),
        interval=np.array([e[2] for e in ev]),
        margin=np.array([e[3] for e in ev]),
        varpi_minus=np.array([e[4] for e in ev]),
    )


def simulate(scenario, record: bool = True) -> SimResult:
    """Run the sampled-data closed loop from ``t0`` to ``T_end``.

    Deterministic: fixed step, no randomness. Stops early when the norm of
    the continuous state drops below ``stop_epsilon``.
    """
    sim = scenario.sim
    law = scenario.trigger
    periodic = isinstance(law, PeriodicLaw)
    observer = _Observer(scenario)
    w0 = np.asarray(sim.w0, dtype=float)
    state = HybridState(sim.t0, w0, scenario.kappa_w(w0), sim.t0)
    m = len(state.u_held)
    rec = _Recorder(scenario)
    acc = ZERO_ACC
    rec.add(state, observer(state.w, state.u_held)[0], acc, law.margin(sim.t0, sim.t0, acc), True)
    events: list = []
    min_interval = math.inf
    max_bracket = 0.0
    termination = "t_end"
    t_end = sim.T_end
    h = sim.h
    eps_t = 1e-12 * max(1.0, abs(t_end))

    def partial():
        return SimResult(rec.trace(), _event_log(events, m), "aborted", scenario.name)

    try:
        while state.t < t_end - eps_t:
            t_k = state.last_event_time
            target = state.t + h
            if target > t_end - eps_t:
                target = t_end
            hit_clock = False
            if periodic:
                # Clock times from the origin avoid drift from repeated t_k + T.
                t_next = sim.t0 + (len(events) + 1) * law.T
                if target >= t_next - eps_t:
                    target, hit_clock = t_next, True
            w1 = _advance(scenario, state.t, state.w, state.u_held, target - state.t)
            after = HybridState(target, w1, state.u_held, t_k)
            varpi, norm, u_val, weighted = observer(w1, state.u_held)
            acc1 = acc.updated(norm, u_val, weighted)
            g1 = law.margin(target, t_k, acc1)

            if periodic:
                fire = hit_clock
                g_fire, new_state, varpi_fire = 0.0, after, varpi
            else:
                fire = should_fire(law, g1, acc1, sim.guard_epsilon)
                if fire:
                    _, g_fire, new_state, _, varpi_fire, width = locate_event(
                        state, after, law, scenario, acc, observer,
                        sim.event_tol, sim.event_tol)
                    max_bracket = max(max_bracket, width)

            if not fire:
                state, acc = after, acc1
                if record:
                    rec.add(state, varpi, acc, g1, False)
            else:
                interval = new_state.t - t_k
                min_interval = min(min_interval, interval)
                events.append((len(events) + 1, new_state.t, interval, g_fire,
                               np.array(varpi_fire, copy=True)))
                if len(events) > sim.max_events:
                    exc = ZenoSuspicion(
                        f"Zeno suspicion: more than {sim.max_events} events by "
                        f"t={new_state.t!r}; min interval {min_interval!r}", min_interval)
                    raise exc
                state = fire_event(new_state, scenario)
                acc = ZERO_ACC
                rec.add(state, np.zeros(m), acc, law.margin(state.t, state.t, acc), True)
            if sim.stop_epsilon > 0 and float(np.linalg.norm(state.w)) < sim.stop_epsilon:
                termination = "converged"
                break
    except SimulationError as exc:
        exc.partial = partial()
        raise
    if not record and rec.rows[-1][0] != state.t:
        rec.add(state, observer(state.w, state.u_held)[0], acc,
                law.margin(state.t, state.last_event_time, acc), False)
    ev = _event_log(events, m)
    diag = {"n_events": len(events),
            "min_interval": min_interval if events else None,
            "t_final": state.t,
            "max_bracket": max_bracket}
    return SimResult(rec.trace(), ev, termination, scenario.name, diag)


def _fmt(v: float) -> str:
    return "%.17g" % v


def write_trace_csv(trace: Trace, path) -> None:
    _write_matrix(path, trace.columns(), trace.as_matrix())


def write_events_csv(events: EventLog, path) -> None:
    _write_matrix(path, events.columns(), events.as_matrix() if len(events) else np.zeros((0, len(events.columns()))))


def _write_matrix(path, header, mat) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in mat:
            wr.writerow([_fmt(v) for v in row])
    tmp.replace(path)


def _read_matrix(path):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        rows = [[float(v) for v in r] for r in rd]
    mat = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, mat


def read_trace_csv(path) -> Trace:
    header, mat = _read_matrix(path)
    col = {name: i for i, name in enumerate(header)}
    wi = [col[c] for c in header if c.startswith("w") and c[1:].isdigit()]
    ui = [col[c] for c in header if c == "u" or (c.startswith("u") and c[1:].isdigit())]
    vi = [col[c] for c in header if c == "varpi" or (c.startswith("varpi") and c[5:].isdigit())]
    return Trace(
        t=mat[:, col["t"]], w=mat[:, wi], u=mat[:, ui], varpi=mat[:, vi],
        sup_varpi=mat[:, col["sup_varpi"]], max_U=mat[:, col["max_U"]],
        max_weighted=mat[:, col["max_weighted"]], margin=mat[:, col["margin"]],
        shadow_margin=mat[:, col["shadow_margin"]], event=mat[:, col["event"]] != 0,
    )


def read_events_csv(path) -> EventLog:
    header, mat = _read_matrix(path)
    vi = [i for i, c in enumerate(header) if c.startswith("varpi_minus")]
    return EventLog(mat[:, 0].astype(int), mat[:, 1], mat[:, 2], mat[:, 3], mat[:, vi])
