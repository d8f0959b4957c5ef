"""Sampling laws.

Each law exposes a margin ``g``; the next sample is taken at the first time
``g >= 0`` (for event laws, only once the window's sup-norm of the sampling
error is nonzero).

* ``SupNormLaw``: ``g = 2 (t - t_k) gamma(sup|w|) - max U(w)``
* ``WeightedLaw``: ``g = a (t - t_k) max(gamma_bar * w**2) - b sup|w|**2``
* ``PeriodicLaw``: ``g = (t - t_k) - T``
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

from .kfun import ComparisonFunction, KfunError, MaspResult, REGISTRY, check_kinf

#: Sup-norm threshold standing in for ``|w|_[t_k, t] != 0``.
GUARD_EPSILON = 1e-12


@dataclass(frozen=True)
class SupNormLaw:
    gamma: ComparisonFunction
    U_radial: ComparisonFunction = REGISTRY["half_square"]
    variant: str = "theorem1"

    def __post_init__(self):
        for label, f in (("gamma", self.gamma), ("U_radial", self.U_radial)):
            res = check_kinf(f)
            if not res:
                raise KfunError(f"{label} is not class K-infinity: {res.diagnostic}")

    def margin(self, t, t_k, acc) -> float:
        return 2.0 * (t - t_k) * float(self.gamma(acc.sup_varpi)) - acc.max_U

    def describe(self) -> dict:
        return {"type": self.variant, "gamma": self.gamma.name, "U": self.U_radial.name}


@dataclass(frozen=True)
class WeightedLaw:
    """``gamma_bar`` maps ``(x, theta_hat, varpi)`` to a positive weight."""

    gamma_bar: Callable
    a: float = 2.0
    b: float = 0.5
    variant: str = "weighted"

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError(f"weighted law coefficients must be positive, got a={self.a}, b={self.b}")

    def margin(self, t, t_k, acc) -> float:
        return self.a * (t - t_k) * acc.max_weighted - self.b * acc.sup_varpi ** 2

    def describe(self) -> dict:
        return {"type": self.variant, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class PeriodicLaw:
    T: float
    variant: str = "periodic"

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"sampling period must be positive, got {self.T!r}")

    def margin(self, t, t_k, acc=None) -> float:
        return (t - t_k) - self.T

    def describe(self) -> dict:
        return {"type": self.variant, "T": self.T}


TriggerLaw = Union[SupNormLaw, WeightedLaw, PeriodicLaw]


def margin(law: TriggerLaw, t: float, t_k: float, acc) -> float:
    return law.margin(t, t_k, acc)


def should_fire(law: TriggerLaw, g: float, acc, guard: float = GUARD_EPSILON) -> bool:
    if g < 0:
        return False
    if isinstance(law, PeriodicLaw):
        return True
    return acc.sup_varpi > guard


def periodic_from_masp(masp_result: MaspResult) -> PeriodicLaw:
    return PeriodicLaw(masp_result.period_T)
