"""Closed-form and quadrature evaluators for shear flows ``V = (0, f(x_1))``."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import brentq, minimize_scalar

from ..errors import BranchError, ConfigurationError
from ..flowlib import Profile1D

TWO_PI = 2.0 * math.pi


def _resolve(f, period: float | None) -> tuple[Callable, float]:
    if isinstance(f, Profile1D):
        return f, TWO_PI if period is None else float(period)
    if not callable(f):
        raise ConfigurationError("profile must be callable")
    return f, 1.0 if period is None else float(period)


def profile_max(f: Callable, period: float, samples: int = 16384) -> float:
    """Maximum of a periodic profile: dense sampling refined by bounded Brent."""
    x = np.arange(samples) * (period / samples)
    y = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(y)):
        raise ConfigurationError("profile has non-finite values")
    k = int(np.argmax(y))
    dx = period / samples
    res = minimize_scalar(lambda s: -float(f(np.asarray(s))), bounds=(x[k] - dx, x[k] + dx),
                          method="bounded", options={"xatol": 1e-12})
    return max(float(y[k]), -float(res.fun))


def _simpson_mean(func: Callable[[NDArray], NDArray], period: float, panels: int = 4096,
                  tol: float = 1e-8, max_panels: int = 1 << 22) -> float:
    """Average over one period by composite Simpson, doubling panels until stable."""

    def simpson(n):
        x = np.linspace(0.0, period, n + 1)
        y = func(x)
        return (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum()) / (3 * n)

    prev = simpson(panels)
    n = panels
    while n < max_panels:
        n *= 2
        cur = simpson(n)
        if abs(cur - prev) < tol:
            return float(cur)
        prev = cur
    return float(prev)


def shear_integral(f: Callable, H: float, b: float, period: float = 1.0) -> float:
    """``I(H) = mean over a period of sqrt((H - b f)^2 - b^2)``."""
    return _simpson_mean(lambda y: np.sqrt(np.maximum((H - b * np.asarray(f(y), dtype=float)) ** 2 - b * b, 0.0)),
                         period)


def exact_shear_hbar(f, p: ArrayLike, period: float | None = None, tol: float = 1e-13) -> float:
    """Effective Hamiltonian of the inviscid G-equation in the shear flow ``(0, f(x_1))``.

    ``p = (a, b)``.  With ``M = |b| + max(b f)``, the value is ``M`` when
    ``|a| <= I(M)`` and otherwise the root of ``I(H) = |a|``.
    """
    f, period = _resolve(f, period)
    a, b = (float(c) for c in np.asarray(p, dtype=float).ravel()[:2])
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ConfigurationError("p must be finite")
    if b == 0.0:
        return abs(a)
    M = abs(b) + profile_max(lambda y: b * np.asarray(f(y), dtype=float), period)
    if abs(a) <= shear_integral(f, M, b, period):
        return M
    lo, hi = M, M + abs(a) + 1.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if shear_integral(f, mid, b, period) < abs(a):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class StrainShearResult:
    E: float
    dE_dd: float
    x: NDArray
    slope: NDArray
    d: float
    p_prime: float

    @property
    def decreasing(self) -> bool:
        return self.dE_dd < 0


def spectral_derivative(values: NDArray, period: float) -> NDArray:
    n = values.size
    k = np.fft.rfftfreq(n, d=period / n) * TWO_PI
    spec = np.fft.rfft(values) * (1j * k)
    if n % 2 == 0:
        spec[-1] = 0.0
    return np.fft.irfft(spec, n)


def _critical_slope(c: NDArray) -> NDArray:
    """Real root of ``P^3 + P + c = 0`` (Cardano; the cubic is monotone)."""
    disc = np.sqrt(c * c / 4 + 1.0 / 27.0)
    return np.cbrt(-c / 2 + disc) + np.cbrt(-c / 2 - disc)


def _strain_H(g, fp, d):
    s = np.sqrt(1 + g * g)
    return s + d * g * fp / s


def _strain_Hp(g, fp, d):
    s2 = 1 + g * g
    return (g * s2 + d * fp) / s2 ** 1.5


def _branch_slope(target: NDArray, fp: NDArray, d: float, g0: NDArray) -> NDArray:
    """Solve ``H(g, x) = target`` for ``g >= g0`` where H increases."""
    lo = g0.copy()
    hi = g0 + np.abs(target) + d * np.abs(fp) + 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        up = _strain_H(mid, fp, d) > target
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
        if np.max(hi - lo) < 1e-15 * np.max(hi):
            break
    g = 0.5 * (lo + hi)
    for _ in range(3):
        hp = _strain_Hp(g, fp, d)
        step = np.where(hp > 1e-8, (_strain_H(g, fp, d) - target) / np.where(hp > 1e-8, hp, 1.0), 0.0)
        g = np.clip(g - step, lo, hi)
    return g


def _strain_energy(fx: NDArray, fp: NDArray, p_prime: float, d: float) -> tuple[float, NDArray]:
    g0 = np.maximum(0.0, _critical_slope(d * fp))
    E_min = 1.0 + float(fx.max())

    def mean_slope(E):
        return float(np.mean(_branch_slope(E - fx, fp, d, g0)))

    base = mean_slope(E_min)
    if p_prime <= base:
        raise BranchError(f"slope {p_prime} is not above the branch minimum {base:.6g}", minimum=E_min)
    hi = E_min + abs(p_prime) + d * float(np.abs(fp).max()) + 1.0
    while mean_slope(hi) < p_prime:
        hi = E_min + 2 * (hi - E_min)
    E = brentq(lambda e: mean_slope(e) - p_prime, E_min, hi, xtol=1e-15, rtol=1e-15, maxiter=400)
    return float(E), _branch_slope(E - fx, fp, d, g0)


def strain_shear_hbar(f, p_prime: float, d: float, period: float | None = None, samples: int = 4096,
                      delta: float = 1e-4) -> StrainShearResult:
    """``E(d)`` for the 1D strain cell problem and a central-difference ``E'(d)``.

    The slope ``g = u'`` solves ``sqrt(1+g^2) + d g f'/sqrt(1+g^2) = E - f`` on
    the branch ``g > max(0, p(x))``, and ``E`` is tuned so that ``mean g = p'``.
    """
    f, period = _resolve(f, period)
    if d < 0:
        raise ConfigurationError("d must be >= 0")
    x = np.arange(samples) * (period / samples)
    fx = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(fx)):
        raise ConfigurationError("profile has non-finite values")
    fp = spectral_derivative(fx, period)
    E, g = _strain_energy(fx, fp, float(p_prime), float(d))
    if d >= delta:
        Ep, _ = _strain_energy(fx, fp, p_prime, d + delta)
        Em, _ = _strain_energy(fx, fp, p_prime, d - delta)
        dE = (Ep - Em) / (2 * delta)
    else:
        Ep, _ = _strain_energy(fx, fp, p_prime, d + delta)
        E2, _ = _strain_energy(fx, fp, p_prime, d + 2 * delta)
        dE = (-3 * E + 4 * Ep - E2) / (2 * delta)
    return StrainShearResult(E, float(dE), x, g, float(d), float(p_prime))
