"""Plants, controllers and scenarios, including the built-in examples.

The continuous state is laid out as ``w = [x, z, theta_hat]`` where ``x`` is
the measured plant state, ``z`` the unmeasured part and ``theta_hat`` the
estimator state. The true parameter never reaches the controller; it only
appears in the certificate bundle used by the analysis checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .kfun import ComparisonFunction, REGISTRY, check_kinf, lookup, masp, rho_q_envelope
from .triggers import PeriodicLaw, SupNormLaw, TriggerLaw, WeightedLaw


class PreconditionError(ValueError):
    """A scenario parameter violates a stated assumption."""


class ConfigurationError(ValueError):
    """A scenario is missing something a requested check needs."""


@dataclass(frozen=True)
class Plant:
    """``dynamics(x, z, u, d, t) -> (xdot, zdot)``; ``output(x) -> y``."""

    n_x: int
    n_z: int
    dynamics: Callable
    output: Callable = None
    disturbance: Optional[Callable] = None
    d_bar: float = 0.0

    def y(self, x):
        return x if self.output is None else self.output(x)


@dataclass(frozen=True)
class Controller:
    """``kappa(y, theta_hat) -> u``; ``estimator_dynamics(y, theta_hat, varpi)``."""

    kappa: Callable
    n_u: int = 1
    estimator_dim: int = 0
    estimator_dynamics: Optional[Callable] = None
    params: dict = field(default_factory=dict)


def half_square_norm(varpi) -> float:
    return 0.5 * float(np.dot(varpi, varpi))


@dataclass(frozen=True)
class Certificates:
    """Functions used only for checking, never by the closed loop."""

    V_bar: Optional[Callable] = None
    U: Callable = half_square_norm
    alpha_w: Optional[ComparisonFunction] = None
    sigma_w: Optional[ComparisonFunction] = None
    bibs_state: Optional[Callable] = None
    udot_bound: Optional[Callable] = None
    theta_true: Optional[np.ndarray] = None
    asymptotic_reference: Optional[float] = None
    R0: Optional[float] = None
    monotone_index: Optional[int] = None
    lyapunov_rtol: float = 1e-6


@dataclass(frozen=True)
class SimSettings:
    w0: tuple
    t0: float = 0.0
    T_end: float = 50.0
    h: float = 1e-3
    stop_epsilon: float = 1e-6
    max_events: int = 10**6
    event_tol: float = 1e-9
    guard_epsilon: float = 1e-12


@dataclass(frozen=True)
class Scenario:
    name: str
    plant: Plant
    controller: Controller
    trigger: TriggerLaw
    certificates: Certificates
    sim: SimSettings
    shadow: Optional[TriggerLaw] = None
    fused_field: Optional[Callable] = None
    fused_kappa: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.plant.n_x + self.plant.n_z + self.controller.estimator_dim
        if len(self.sim.w0) != n:
            raise ConfigurationError(
                f"initial state has {len(self.sim.w0)} entries, expected {n}")
        if not self.sim.T_end > self.sim.t0:
            raise ConfigurationError("T_end must exceed t0")
        if not self.sim.h > 0:
            raise ConfigurationError("step size h must be positive")

    @property
    def n_w(self) -> int:
        return self.plant.n_x + self.plant.n_z + self.controller.estimator_dim

    def split(self, w):
        nx, nz = self.plant.n_x, self.plant.n_z
        return w[:nx], w[nx:nx + nz], w[nx + nz:]

    def plant_state(self, w):
        return w[:self.plant.n_x + self.plant.n_z]

    def kappa_w(self, w) -> np.ndarray:
        if self.fused_kappa is not None:
            return self.fused_kappa(w)
        x, _, th = self.split(w)
        return np.atleast_1d(np.asarray(self.controller.kappa(self.plant.y(x), th), dtype=float))

    def disturbance(self, t):
        d = self.plant.disturbance
        return 0.0 if d is None else d(t)

    def field(self, t, w, u_held):
        """Time derivative of ``w`` with the control held at ``u_held``."""
        d = self.disturbance(t)
        if self.fused_field is not None:
            return self.fused_field(t, w, u_held, d)
        return self.composed_field(t, w, u_held, d)

    def composed_field(self, t, w, u_held, d):
        x, z, th = self.split(w)
        xd, zd = self.plant.dynamics(x, z, u_held, d, t)
        parts = [np.atleast_1d(xd), np.atleast_1d(zd)]
        if self.controller.estimator_dim:
            y = self.plant.y(x)
            varpi = u_held - np.atleast_1d(self.controller.kappa(y, th))
            parts.append(np.atleast_1d(self.controller.estimator_dynamics(y, th, varpi)))
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    def with_trigger(self, trigger: TriggerLaw, shadow: Optional[TriggerLaw] = None) -> "Scenario":
        return replace(self, trigger=trigger, shadow=shadow)

    def with_sim(self, **kw) -> "Scenario":
        return replace(self, sim=replace(self.sim, **kw))


# -- Adaptive stabilization with an uncertain parameter ---------------------

def example1_constants(lam: float) -> dict:
    lambda_c = 3.501 + 0.25 * lam * lam
    env = rho_q_envelope(lambda x: np.full_like(np.asarray(x, dtype=float), lambda_c))
    rho_q = float(env(0.0))
    return {"lambda_c": lambda_c, "rho_q": rho_q}


def example1_gamma_bar(lam: float, rho_q: float) -> Callable:
    const = 0.25 + 1.25 * lam + 0.5 * rho_q

    def gamma_bar(x, theta_hat, varpi=None):
        th = float(theta_hat[0])
        rho = rho_q * math.cos(float(x[0]))
        return 2.0 * th**4 + 9.0 * th * th + abs(th) + rho * rho + const
    return gamma_bar


def example1_supply(lam: float, rho_q: float, theta: float):
    """Polynomial ``alpha_w``, ``sigma_w`` with ``dU <= alpha_w(|varpi|) + sigma_w(|xi|)``.

    ``xi = (x, theta_hat - theta)``. Obtained from the pointwise bound in
    ``udot_bound`` using ``|theta_hat| <= |theta| + |xi|`` and Young's
    inequality on every cross term.
    """
    a0 = 1.25 + abs(theta)
    c1 = 2.25 * a0 + lam * rho_q
    ka = a0 + 1.25 * lam + 1.5
    ks = 0.5 * c1 * c1
    alpha_w = ComparisonFunction(lambda s: ka * s * s + 0.5 * s**4, 1.0, "example1_alpha_w")
    sigma_w = ComparisonFunction(lambda r: ks * r * r + (81.0 / 32.0) * r**4, 1.0,
                                 "example1_sigma_w")
    return alpha_w, sigma_w


def example1_scenario(lam: float = 1.0, x0: float = 1.0, theta_hat0: float = 0.0,
                      theta_true: float = 0.1534, varsigma_sign: float = 1.0,
                      T_end: float = 50.0, h: float = 1e-3, stop_epsilon: float = 1e-6,
                      **sim_kw) -> Scenario:
    """Scalar plant ``xdot = theta cos x + u`` under adaptive event-triggered control.

    ``varsigma_sign`` selects the sign of the estimator correction
    ``varsigma = varsigma_sign * (5/4) * varpi``; +1 is the choice under
    which the composite Lyapunov function decreases (sampling error taken as
    held minus current control).
    """
    if not abs(theta_true) < 2:
        raise PreconditionError(f"|theta_true| must be < 2, got {theta_true!r}")
    if not lam > 0:
        raise PreconditionError(f"lambda must be positive, got {lam!r}")
    c = example1_constants(lam)
    rho_q = c["rho_q"]
    theta = float(theta_true)
    s_corr = float(varsigma_sign) * 1.25

    def kappa(y, th):
        return -th[0] * math.cos(y[0]) - 1.25 * y[0]

    def plant_dyn(x, z, u, d, t):
        return np.array([theta * math.cos(x[0]) + u[0] + d]), np.zeros(0)

    def est_dyn(y, th, varpi):
        xv = y[0]
        return np.array([lam * rho_q * xv * math.cos(xv) + lam * s_corr * varpi[0]])

    def fused_kappa(w):
        return np.array([-w[1] * math.cos(w[0]) - 1.25 * w[0]])

    def fused(t, w, u, d):
        x, th = w[0], w[1]
        cx = math.cos(x)
        varpi = u[0] + th * cx + 1.25 * x
        return np.array([theta * cx + u[0] + d,
                         lam * rho_q * x * cx + lam * s_corr * varpi])

    def V_bar(w, varpi):
        tt = w[1] - theta
        return 0.5 * rho_q * w[0] ** 2 + tt * tt / (2.0 * lam) + 0.5 * float(np.dot(varpi, varpi))

    def udot_bound(w, varpi):
        x, th = w[0], w[1]
        p = abs(float(varpi[0]))
        a = 1.25 + abs(th)
        return p * (a * (abs(th - theta) + 1.25 * abs(x) + p) + lam * rho_q * abs(x) + 1.25 * lam * p)

    alpha_w, sigma_w = example1_supply(lam, rho_q, theta)
    plant = Plant(1, 0, plant_dyn)
    ctrl = Controller(kappa, 1, 1, est_dyn,
                      {"lambda": lam, "rho_q": rho_q, "lambda_c": c["lambda_c"]})
    law = WeightedLaw(example1_gamma_bar(lam, rho_q), a=1.0, b=0.25)
    cert = Certificates(V_bar=V_bar, udot_bound=udot_bound, theta_true=np.array([theta]),
                        alpha_w=alpha_w, sigma_w=sigma_w,
                        bibs_state=lambda w: np.array([w[0], w[1] - theta]))
    sim = SimSettings((x0, theta_hat0), T_end=T_end, h=h, stop_epsilon=stop_epsilon, **sim_kw)
    params = {"lambda": lam, "x0": x0, "theta_hat0": theta_hat0, "theta_true": theta_true,
              "varsigma_sign": varsigma_sign}
    return Scenario("example1", plant, ctrl, law, cert, sim,
                    fused_field=fused, fused_kappa=fused_kappa, params=params)


# -- Dynamic gain stabilization ----------------------------------------------

def example2_gamma_bar(b_bar: float, c_bar: float) -> Callable:
    def gamma_bar(x, theta_hat, varpi):
        th = abs(float(theta_hat[0]))
        p = abs(float(varpi[0]))
        kappa_bar = ((th + p) ** 4 + 1.0) / c_bar
        alpha = 1.0 + th * th + th**4 + 2.0 * b_bar * th
        return 0.5 * kappa_bar + alpha + 0.5
    return gamma_bar


def example2_scenario(w1: float = 0.5, w2: float = 1.0, w3: float = 0.8, b: float = 0.7,
                      lam: float = 1.0, c_bar: float = 1.0, b_bar: float = 1.0,
                      z0: float = 1.0, x0: float = 1.0, theta_hat0: float = 0.0,
                      theta_design: Optional[float] = None,
                      T_end: float = 50.0, h: float = 1e-3, stop_epsilon: float = 1e-6,
                      **sim_kw) -> Scenario:
    """``zdot = -z + w3 x``, ``xdot = w1 z sin x + w2 x + b u`` with a monotone gain."""
    if not 0 < b < 1:
        raise PreconditionError(f"b must lie in (0, 1), got {b!r}")
    if not b <= b_bar:
        raise PreconditionError(f"b={b!r} exceeds the known bound b_bar={b_bar!r}")
    if not (lam > 0 and c_bar > 0):
        raise PreconditionError("lambda and c_bar must be positive")

    def kappa(y, th):
        return -th[0] * y[0]

    def plant_dyn(x, z, u, d, t):
        xv, zv = x[0], z[0]
        return (np.array([w1 * zv * math.sin(xv) + w2 * xv + b * u[0] + d]),
                np.array([-zv + w3 * xv]))

    def est_dyn(y, th, varpi):
        return np.array([lam * y[0] * y[0]])

    def fused_kappa(w):
        return np.array([-w[2] * w[0]])

    def fused(t, w, u, d):
        x, z = w[0], w[1]
        return np.array([w1 * z * math.sin(x) + w2 * x + b * u[0] + d,
                         -z + w3 * x,
                         lam * x * x])

    V_bar = None
    theta_true = None
    if theta_design is not None:
        theta_true = np.array([float(theta_design)])

        def V_bar(w, varpi):
            tt = w[2] - theta_design
            return 0.5 * w[0] ** 2 + b * tt * tt / (2.0 * lam) + 2.0 * w[1] ** 2 \
                + 0.5 * float(np.dot(varpi, varpi))

    plant = Plant(1, 1, plant_dyn)
    ctrl = Controller(kappa, 1, 1, est_dyn, {"lambda": lam, "c_bar": c_bar, "b_bar": b_bar})
    law = WeightedLaw(example2_gamma_bar(b_bar, c_bar), a=1.0, b=0.25)
    cert = Certificates(V_bar=V_bar, theta_true=theta_true, monotone_index=2)
    sim = SimSettings((x0, z0, theta_hat0), T_end=T_end, h=h, stop_epsilon=stop_epsilon, **sim_kw)
    params = {"w1": w1, "w2": w2, "w3": w3, "b": b, "lambda": lam, "c_bar": c_bar,
              "b_bar": b_bar, "z0": z0, "x0": x0, "theta_hat0": theta_hat0}
    return Scenario("example2", plant, ctrl, law, cert, sim,
                    fused_field=fused, fused_kappa=fused_kappa, params=params)


# -- Robust strict-feedback design -------------------------------------------

def robust_scenario(rho: Callable, gamma: ComparisonFunction, plant: Plant,
                    certificates: Certificates, w0, name: str = "robust",
                    **sim_kw) -> Scenario:
    """Static controller ``u = -rho(x) x`` with the basic event trigger.

    ``certificates`` must carry ``alpha_w`` and ``sigma_w`` for the BIBS check.
    """
    if certificates.alpha_w is None or certificates.sigma_w is None:
        raise ConfigurationError("robust scenario needs alpha_w and sigma_w certificates")
    for label, f in (("gamma", gamma), ("alpha_w", certificates.alpha_w),
                     ("sigma_w", certificates.sigma_w)):
        res = check_kinf(f)
        if not res:
            raise ConfigurationError(f"{label} is not class K-infinity: {res.diagnostic}")

    def kappa(y, th):
        xv = y[0]
        r = rho(xv)
        if not r > 0:
            raise PreconditionError(f"rho must be positive, got {r!r} at x={xv!r}")
        return -r * xv

    ctrl = Controller(kappa, 1, 0)
    law = SupNormLaw(gamma, REGISTRY["half_square"])
    return Scenario(name, plant, ctrl, law, certificates, SimSettings(tuple(w0), **sim_kw))


def robust_design(w1: float, w2: float, w3: float) -> dict:
    """Quadratic design constants for the strict-feedback plant with known ``w``.

    ``zdot = -z + w3 x`` admits ``V_z = a z**2`` with ``a = m1**2 + 1`` giving
    decay ``(m1**2 + 1) z**2`` and gain ``kappa_x = a w3**2``. Then
    ``rho = kappa_x + m2 + 3/2`` renders ``V_xi = V_z + x**2/2`` an ISS-Lyapunov
    function with ``dV <= -|xi|**2 + varpi**2``. Young's inequality on
    ``dU = varpi * rho * xdot`` gives ``alpha_w(s) = (rho + 2) s**2`` and
    ``sigma_w(s) = rho**2 (m1**2 + (m2 + rho)**2) / 4 * s**2``. Scaling
    ``V_q = c V_xi`` with ``c = 2 k_sigma + 1`` and taking
    ``gamma = sigma_q/2 + alpha_w + s**2/2`` completes the design.
    """
    m1, m2 = abs(w1), abs(w2)
    a = m1 * m1 + 1.0
    kappa_x = a * w3 * w3
    rho = kappa_x + m2 + 1.5
    k_alpha = rho + 2.0
    k_sigma = rho * rho * (m1 * m1 + (m2 + rho) ** 2) / 4.0
    c = 2.0 * k_sigma + 1.0
    k_gamma = 0.5 * c + k_alpha + 0.5
    return {"m1": m1, "m2": m2, "a": a, "kappa_x": kappa_x, "rho": rho,
            "k_alpha": k_alpha, "k_sigma": k_sigma, "c": c, "k_gamma": k_gamma}


def robust_reference_scenario(w1: float = 0.5, w2: float = 1.0, w3: float = 0.8,
                              x0: float = 1.0, z0: float = 1.0, T_end: float = 20.0,
                              h: float = 1e-3, stop_epsilon: float = 1e-6, **sim_kw) -> Scenario:
    """Strict-feedback plant of ``example2_scenario`` with unit input gain and known ``w``."""
    dz = robust_design(w1, w2, w3)
    rho_c, a, c = dz["rho"], dz["a"], dz["c"]
    ka, ks, kg = dz["k_alpha"], dz["k_sigma"], dz["k_gamma"]

    def plant_dyn(x, z, u, d, t):
        xv, zv = x[0], z[0]
        return (np.array([w1 * zv * math.sin(xv) + w2 * xv + u[0] + d]),
                np.array([-zv + w3 * xv]))

    def fused_kappa(w):
        return np.array([-rho_c * w[0]])

    def fused(t, w, u, d):
        x, z = w[0], w[1]
        return np.array([w1 * z * math.sin(x) + w2 * x + u[0] + d, -z + w3 * x])

    def V_bar(w, varpi):
        return c * (a * w[1] ** 2 + 0.5 * w[0] ** 2) + 0.5 * float(np.dot(varpi, varpi))

    alpha_w = ComparisonFunction(lambda s: ka * s * s, 1.0, "robust_alpha_w")
    sigma_w = ComparisonFunction(lambda s: ks * s * s, 1.0, "robust_sigma_w")
    gamma = ComparisonFunction(lambda s: kg * s * s, 1.0, "robust_gamma")

    def udot_bound(w, varpi):
        p = math.sqrt(float(np.dot(varpi, varpi)))
        return alpha_w(p) + sigma_w(math.hypot(w[0], w[1]))

    cert = Certificates(V_bar=V_bar, alpha_w=alpha_w, sigma_w=sigma_w,
                        bibs_state=lambda w: w[:2], udot_bound=udot_bound)
    plant = Plant(1, 1, plant_dyn)
    sc = robust_scenario(lambda xv: rho_c, gamma, plant, cert, (x0, z0), "robust",
                         T_end=T_end, h=h, stop_epsilon=stop_epsilon, **sim_kw)
    params = {"w1": w1, "w2": w2, "w3": w3, "x0": x0, "z0": z0, **dz}
    return replace(sc, fused_field=fused, fused_kappa=fused_kappa, params=params)


# -- Scalar linear test plant -------------------------------------------------

def scalar_scenario(a: float = 0.1, k: float = 0.3, x0: float = 1.0,
                    trigger: Optional[TriggerLaw] = None, shadow: Optional[TriggerLaw] = None,
                    T_end: float = 50.0, h: float = 1e-3, stop_epsilon: float = 1e-6,
                    name: str = "scalar", **sim_kw) -> Scenario:
    """``xdot = a x + u`` with ``u = -k x``; the trigger defaults to gamma = 2 s**2."""
    if trigger is None:
        trigger = SupNormLaw(REGISTRY["two_square"], REGISTRY["half_square"])

    def plant_dyn(x, z, u, d, t):
        return np.array([a * x[0] + u[0] + d]), np.zeros(0)

    def fused_kappa(w):
        return np.array([-k * w[0]])

    def fused(t, w, u, d):
        return np.array([a * w[0] + u[0] + d])

    ctrl = Controller(lambda y, th: -k * y[0], 1, 0)
    cert = Certificates(V_bar=lambda w, varpi: 0.5 * w[0] ** 2 + 0.5 * float(np.dot(varpi, varpi)))
    sim = SimSettings((x0,), T_end=T_end, h=h, stop_epsilon=stop_epsilon, **sim_kw)
    return Scenario(name, Plant(1, 0, plant_dyn), ctrl, trigger, cert, sim, shadow=shadow,
                    fused_field=fused, fused_kappa=fused_kappa,
                    params={"a": a, "k": k, "x0": x0})


def scalar_event_scenario(a: float = 0.1, k: float = 0.3, x0: float = 1.0,
                             gamma: str = "two_square", U: str = "half_square",
                             T_end: float = 50.0, stop_epsilon: float = 1e-6, **kw) -> Scenario:
    from .kfun import asymptotic_interval
    g, u = lookup(gamma), lookup(U)
    sc = scalar_scenario(a, k, x0, SupNormLaw(g, u), T_end=T_end,
                         stop_epsilon=stop_epsilon, name="scalar_event", **kw)
    ref = asymptotic_interval(u, g).value
    return replace(sc, certificates=replace(sc.certificates, asymptotic_reference=ref),
                   params={**sc.params, "gamma": gamma, "U": U})


def scalar_masp_scenario(a: float = 0.1, k: float = 0.3, x0: float = 1.0,
                         gamma: str = "square_plus_quartic", U: str = "half_square",
                         R0: float = 1.0, T_end: float = 50.0, **kw) -> Scenario:
    """Periodic sampling at the MASP with the event law evaluated as a shadow."""
    g, u = lookup(gamma), lookup(U)
    res = masp(u, g, R0)
    sc = scalar_scenario(a, k, x0, PeriodicLaw(res.period_T), shadow=SupNormLaw(g, u),
                         T_end=T_end, name="scalar_masp", **kw)
    return replace(sc, certificates=replace(sc.certificates, R0=R0),
                   params={**sc.params, "gamma": gamma, "U": U, "R0": R0,
                           "period_T": res.period_T})


# -- Disturbances -------------------------------------------------------------

def add_disturbance(scenario: Scenario, d: Callable, d_bar: float, n_grid: int = 10001) -> Scenario:
    """Feed ``d(t)`` into the plant after checking ``|d(t)| <= d_bar`` on a grid."""
    ts = np.linspace(scenario.sim.t0, scenario.sim.T_end, n_grid)
    vals = np.array([np.linalg.norm(np.atleast_1d(d(t))) for t in ts])
    if np.any(vals > d_bar * (1 + 1e-12)):
        i = int(np.argmax(vals > d_bar * (1 + 1e-12)))
        raise PreconditionError(f"disturbance bound violated at t={ts[i]!r}: "
                                f"|d|={vals[i]!r} > d_bar={d_bar!r}")
    plant = replace(scenario.plant, disturbance=d, d_bar=d_bar)
    return replace(scenario, plant=plant, params={**scenario.params, "d_bar": d_bar})


def example1_disturbed_scenario(d_bar: float = 0.1, d_freq: float = 1.0, **kw) -> Scenario:
    sc = example1_scenario(**kw)
    sc = add_disturbance(sc, lambda t: d_bar * math.sin(d_freq * t), d_bar)
    return replace(sc, name="example1_disturbed",
                   params={**sc.params, "d_bar": d_bar, "d_freq": d_freq})


# -- Registry -----------------------------------------------------------------

_SIM_KEYS = ("T_end", "h", "stop_epsilon", "t0", "max_events")

#: name -> (builder, default parameters). Keys are the config/CLI spelling.
SCENARIOS: dict[str, tuple[Callable, dict]] = {
    "example1": (example1_scenario,
                 {"lambda": 1.0, "x0": 1.0, "theta_hat0": 0.0, "theta_true": 0.1534,
                  "varsigma_sign": 1.0}),
    "example1_disturbed": (example1_disturbed_scenario,
                           {"lambda": 1.0, "x0": 1.0, "theta_hat0": 0.0, "theta_true": 0.1534,
                            "varsigma_sign": 1.0, "d_bar": 0.1, "d_freq": 1.0}),
    "example2": (example2_scenario,
                 {"w1": 0.5, "w2": 1.0, "w3": 0.8, "b": 0.7, "lambda": 1.0, "c_bar": 1.0,
                  "b_bar": 1.0, "z0": 1.0, "x0": 1.0, "theta_hat0": 0.0}),
    "robust": (robust_reference_scenario,
               {"w1": 0.5, "w2": 1.0, "w3": 0.8, "x0": 1.0, "z0": 1.0}),
    "scalar_event": (scalar_event_scenario,
                        {"a": 0.1, "k": 0.3, "x0": 1.0, "gamma": "two_square", "U": "half_square"}),
    "scalar_masp": (scalar_masp_scenario,
                    {"a": 0.1, "k": 0.3, "x0": 1.0, "gamma": "square_plus_quartic",
                     "U": "half_square", "R0": 1.0}),
}

_ALIASES = {"lambda": "lam"}


def build_scenario(name: str, params: Optional[dict] = None, sim: Optional[dict] = None) -> Scenario:
    """Build a registered scenario; unknown names or keys raise ``ConfigurationError``."""
    if name not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}")
    builder, defaults = SCENARIOS[name]
    params = dict(params or {})
    sim = dict(sim or {})
    for key in list(params):
        if key in _SIM_KEYS:
            sim[key] = params.pop(key)
    unknown = [k for k in params if k not in defaults]
    if unknown:
        raise ConfigurationError(f"unknown parameter(s) for {name}: {', '.join(unknown)}")
    unknown = [k for k in sim if k not in _SIM_KEYS]
    if unknown:
        raise ConfigurationError(f"unknown sim setting(s): {', '.join(unknown)}")
    kw = {_ALIASES.get(k, k): v for k, v in {**defaults, **params}.items()}
    kw.update(sim)
    if "max_events" in kw:
        kw["max_events"] = int(kw["max_events"])
    sc = builder(**kw)
    resolved = {**defaults, **params}
    return replace(sc, params={**sc.params, **resolved})
