"""Comparison-function toolkit.

Class-K-infinity functions are handled numerically: point evaluation on
logarithmic grids, inversion by bracketing and bisection, limit estimates as
``s -> 0+``, the nondecreasing envelope used for changing supply functions,
and the maximum allowable sampling period (MASP).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

#: Smallest probe is ``domain_hint * 2**-GRID_OCTAVES``.
GRID_OCTAVES = 40

_ZERO_TOL = 1e-12
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class KfunError(ValueError):
    """Raised when a comparison function violates a numeric precondition."""


class NoPositiveMasp(KfunError):
    """The ratio ``U(s)/gamma(s)`` vanishes as ``s -> 0+``."""


@dataclass(frozen=True)
class ComparisonFunction:
    """A scalar function on ``[0, inf)`` expected to be of class K-infinity.

    ``fn`` may accept numpy arrays; when it does not, grid evaluation falls
    back to a Python loop. ``domain_hint`` is the upper end of the range the
    function will be probed on.
    """

    fn: Callable
    domain_hint: float = 1.0
    name: str = ""

    def __call__(self, s):
        return self.fn(s)

    def grid(self, s: np.ndarray) -> np.ndarray:
        return evaluate(self.fn, s)


def evaluate(fn: Callable, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    try:
        with np.errstate(all="ignore"):
            out = np.asarray(fn(s), dtype=float)
        if out.shape == s.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(fn(float(v))) for v in s.ravel()]).reshape(s.shape)


def log_grid(upper: float, n: int, octaves: int = GRID_OCTAVES) -> np.ndarray:
    """``n`` geometrically spaced points on ``[upper * 2**-octaves, upper]``."""
    return upper * np.logspace(-octaves * math.log10(2.0), 0.0, n)


@dataclass(frozen=True)
class KinfCheck:
    ok: bool
    diagnostic: str = ""

    def __bool__(self) -> bool:
        return self.ok


def check_kinf(f: ComparisonFunction, grid_size: int = 64) -> KinfCheck:
    """Check ``f(0) = 0``, strict increase on a log grid, and growth past the hint."""
    if grid_size < 8:
        raise KfunError(f"grid_size must be >= 8, got {grid_size}")
    f0 = float(f(0.0))
    if not math.isfinite(f0):
        return KinfCheck(False, "non-finite value at s=0")
    if abs(f0) > _ZERO_TOL:
        return KinfCheck(False, f"f(0) = {f0!r} is not zero")
    s = log_grid(f.domain_hint, grid_size)
    vals = f.grid(s)
    bad = ~np.isfinite(vals)
    if bad.any():
        return KinfCheck(False, f"non-finite value at s={s[bad][0]!r}")
    if vals[0] <= f0:
        return KinfCheck(False, f"not increasing between s=0 and s={s[0]!r}")
    steps = np.diff(vals)
    if (steps <= 0).any():
        i = int(np.argmax(steps <= 0))
        return KinfCheck(False, f"not strictly increasing between s={s[i]!r} and s={s[i + 1]!r}")
    far = float(f(10.0 * f.domain_hint))
    if not math.isfinite(far):
        return KinfCheck(False, f"non-finite value at s={10.0 * f.domain_hint!r}")
    if far <= vals[-1]:
        return KinfCheck(False, "no growth beyond domain_hint (unbounded proxy fails)")
    return KinfCheck(True)


@dataclass(frozen=True)
class SmallOResult:
    """Limit estimate of ``num(s)/den(s)`` as ``s -> 0+``."""

    limit: float
    bounded: bool
    ratios: tuple = field(default=(), repr=False)
    diagnostic: str = ""

    def __bool__(self) -> bool:
        return self.bounded


def small_o_at_zero(num: ComparisonFunction, den: ComparisonFunction) -> SmallOResult:
    """Decide whether ``num = O(den)`` as ``s -> 0+``.

    The ratio is sampled at ``s_k = den.domain_hint * 2**-k`` for
    ``k = 1..40``. The sequence counts as bounded when its last ten terms are
    finite and the last term is at most twice their median.
    """
    ks = np.arange(1, GRID_OCTAVES + 1)
    s = den.domain_hint * np.power(2.0, -ks.astype(float))
    n = num.grid(s)
    d = den.grid(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = n / d
    if np.any((d == 0) & (n != 0)):
        return SmallOResult(math.inf, False, tuple(r), "ratio diverges")
    r = np.where((d == 0) & (n == 0), np.nan, r)
    tail = r[-10:]
    tail = tail[np.isfinite(tail)]
    if tail.size < 5:
        return SmallOResult(math.nan, False, tuple(r), "ratio undefined near zero")
    last = float(tail[-1])
    med = float(np.median(tail))
    if last > 2.0 * med:
        return SmallOResult(last, False, tuple(r), "ratio diverges")
    return SmallOResult(last, True, tuple(r))


def invert(f: ComparisonFunction, y: float, rtol: float = 1e-10) -> float:
    """Solve ``f(s) = y`` for a K-infinity ``f`` by bracketing and bisection.

    Stops once the bracket on ``s`` is narrower than ``rtol`` relative.
    """
    if y < 0 or not math.isfinite(y):
        raise KfunError(f"cannot invert at y={y!r}: domain is [0, inf)")
    if y == 0:
        return 0.0
    lo, hi = 0.0, f.domain_hint
    limit = 2.0**10 * f.domain_hint
    while f(hi) < y:
        lo = hi
        hi *= 2.0
        if hi > limit:
            raise KfunError(f"target {y!r} exceeds probed range")
    # Relative bracket width on s, so small targets keep full precision.
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == y:
            return mid
        if fm < y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    return 0.5 * (lo + hi)


class RhoEnvelope:
    """Nondecreasing ``rho_q(v)`` with ``0.5 * rho_q(0.5 * x**2) >= Delta(x)``.

    Knots sit at ``v_i = x_i**2 / 2``; values are linearly interpolated
    between knots and held constant past the last one.
    """

    def __init__(self, v: np.ndarray, values: np.ndarray, x: np.ndarray):
        self.v = v
        self.values = values
        self.x = x

    @property
    def v_max(self) -> float:
        return float(self.v[-1])

    def __call__(self, v):
        out = np.interp(v, self.v, self.values)
        return float(out) if np.ndim(out) == 0 else out


def rho_q_envelope(delta: Callable[[float], float], x_max: float = 10.0,
                   n: int = 4097) -> RhoEnvelope:
    x = np.linspace(0.0, x_max, n)
    d = np.maximum(evaluate(delta, x), evaluate(delta, -x))
    bad = ~np.isfinite(d)
    if bad.any():
        raise KfunError(f"Delta is not finite at x={x[bad][0]!r}")
    if (d <= 0).any():
        raise KfunError(f"Delta must be positive, got {d[d <= 0][0]!r}")
    values = 2.0 * np.maximum.accumulate(d)
    return RhoEnvelope(0.5 * x * x, values, x)


@dataclass(frozen=True)
class MaspResult:
    period_T: float
    argmin_s: float
    R0: float
    grid_points: int
    min_ratio: float = math.nan
    verify_margin: float = math.nan

    def to_dict(self) -> dict:
        return {
            "period_T": self.period_T,
            "argmin_s": self.argmin_s,
            "R0": self.R0,
            "grid_points": self.grid_points,
            "min_ratio": self.min_ratio,
            "verify_margin": self.verify_margin,
        }


def _golden_min(fun: Callable[[float], float], a: float, b: float, rtol: float = 1e-8):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    while abs(b - a) > rtol * max(abs(c), abs(d), 1e-300):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fun(d)
    return (c, fc) if fc < fd else (d, fd)


# Keeps 2*T*gamma(s) strictly below U(s) where the ratio is attained exactly.
_MASP_SAFETY = 1.0 - 1e-9


def masp(U_radial: ComparisonFunction, gamma: ComparisonFunction, R0: float,
         grid: int = 4096) -> MaspResult:
    """Largest period with ``2 T gamma(s) < U(s)`` on ``(0, R0]``.

    Minimizes ``U/gamma`` on a log grid, refines the argmin by golden
    section, and verifies the strict inequality on a grid twice as fine.
    """
    if R0 <= 0:
        raise KfunError(f"R0 must be positive, got {R0!r}")
    so = small_o_at_zero(gamma, U_radial)
    if not so.bounded:
        raise NoPositiveMasp("no positive MASP exists: gamma is not O(U) as s -> 0+")

    def ratio(s):
        return float(U_radial(s)) / float(gamma(s))

    s = log_grid(R0, grid)
    r = U_radial.grid(s) / gamma.grid(s)
    if not np.all(np.isfinite(r)):
        raise KfunError("U/gamma not finite on the search grid")
    i = int(np.argmin(r))
    a = s[max(i - 1, 0)]
    b = s[min(i + 1, grid - 1)]
    s_star, r_star = _golden_min(ratio, a, b)
    if r[i] <= r_star:
        s_star, r_star = float(s[i]), float(r[i])

    sv = log_grid(R0, 2 * grid)
    uv = U_radial.grid(sv)
    gv = gamma.grid(sv)
    r_star = min(r_star, float(np.min(uv / gv)))
    if r_star <= 0:
        raise NoPositiveMasp("no positive MASP exists: U/gamma reaches zero")
    T = 0.5 * r_star * _MASP_SAFETY
    margin = uv - 2.0 * T * gv
    if not np.all(margin > 0):
        raise KfunError("MASP verification failed: 2 T gamma(s) >= U(s) on the check grid")
    return MaspResult(T, float(s_star), float(R0), grid, r_star, float(np.min(margin)))


@dataclass(frozen=True)
class AsymptoticInterval:
    """Half the limit of ``U(s)/gamma(s)`` as ``s -> 0+``."""

    value: float
    flag: str = ""


def asymptotic_interval(U_radial: ComparisonFunction,
                        gamma: ComparisonFunction) -> AsymptoticInterval:
    so = small_o_at_zero(U_radial, gamma)
    if not so.bounded:
        return AsymptoticInterval(math.inf, "unbounded asymptotic interval")
    if abs(so.limit) <= _ZERO_TOL:
        return AsymptoticInterval(0.0, "zero asymptotic interval")
    return AsymptoticInterval(0.5 * so.limit)


def _kf(fn, name, hint=1.0):
    return ComparisonFunction(fn, hint, name)


#: Named functions addressable from config files and the command line.
REGISTRY: dict[str, ComparisonFunction] = {
    "linear": _kf(lambda s: s, "linear"),
    "square": _kf(lambda s: s * s, "square"),
    "half_square": _kf(lambda s: 0.5 * s * s, "half_square"),
    "two_square": _kf(lambda s: 2.0 * s * s, "two_square"),
    "cube": _kf(lambda s: s ** 3, "cube"),
    "square_plus_cube": _kf(lambda s: s * s + s ** 3, "square_plus_cube"),
    "square_plus_quartic": _kf(lambda s: s * s + s ** 4, "square_plus_quartic"),
}


def lookup(name: str) -> ComparisonFunction:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown comparison function {name!r}; "
                       f"known: {', '.join(sorted(REGISTRY))}") from None
