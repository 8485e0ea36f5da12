"""Parameter sweeps built on the H̄ estimators: growth laws, curvature gaps,
homogenization rate and the KPP front speed."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import minimize_scalar

from ..errors import ConfigurationError, ResolutionError
from ..flowlib import FlowSpec
from ..grid import PeriodicGrid
from ..hjsolver import GEquationSpec, SolverConfig, evolve
from .estimates import EffectiveHEstimate, hbar_discounted, hbar_large_time
from .shear import exact_shear_hbar


# ---------------------------------------------------------------- growth laws

@dataclass
class GrowthFit:
    """H̄ against flow intensity with three fitted model families.

    ``fits`` maps ``linear``, ``loglaw`` and ``bounded`` to their parameters
    and RMS residual.  ``band_C`` is the constant of the unit-prefactor log
    law ``A pi |p|_1 / (2 log A + C)`` chosen to minimise the worst ratio.
    """

    p: NDArray
    A_values: NDArray
    H_values: NDArray
    converged: list[bool]
    fits: dict
    best: str
    band_C: float | None = None
    band_ratios: NDArray | None = None
    estimates: list[EffectiveHEstimate] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return not all(self.converged)

    @property
    def fitted_C(self) -> float | None:
        return self.fits.get("loglaw", {}).get("C")

    def to_dict(self) -> dict:
        return {"p": self.p.tolist(), "A": self.A_values.tolist(), "H": self.H_values.tolist(),
                "converged": self.converged, "partial": self.partial, "fits": self.fits, "best": self.best,
                "band_C": self.band_C,
                "band_ratios": None if self.band_ratios is None else self.band_ratios.tolist()}


def loglaw_ratio(A: ArrayLike, H: ArrayLike, p: ArrayLike, C: float) -> NDArray:
    """``H (2 log A + C) / (A pi |p|_1)``; equals 1 on the unit-prefactor law."""
    A = np.asarray(A, dtype=float)
    return np.asarray(H, dtype=float) * (2 * np.log(A) + C) / (A * math.pi * np.abs(np.asarray(p)).sum())


def fit_growth(A: ArrayLike, H: ArrayLike, p: ArrayLike) -> tuple[dict, str, float | None, NDArray | None]:
    A = np.asarray(A, dtype=float)
    H = np.asarray(H, dtype=float)
    p = np.asarray(p, dtype=float)
    fits = {}
    slope, icpt = np.polyfit(A, H, 1) if A.size > 1 else (0.0, float(H[0]))
    fits["linear"] = {"a": float(slope), "b": float(icpt),
                      "residual": float(np.sqrt(np.mean((slope * A + icpt - H) ** 2)))}
    fits["bounded"] = {"value": float(H.mean()), "residual": float(np.sqrt(np.mean((H - H.mean()) ** 2)))}
    band_C = ratios = None
    p1 = float(np.abs(p).sum())
    if A.size > 1 and np.all(A > 1) and np.all(H > 0) and p1 > 0:
        # A pi |p|_1 / H = (2/c) log A + C/c
        y = A * math.pi * p1 / H
        m, k = np.polyfit(np.log(A), y, 1)
        if m > 0:
            c = 2.0 / m
            C = k * c
            model = c * A * math.pi * p1 / (2 * np.log(A) + C)
            ok = np.all(2 * np.log(A) + C > 0)
            fits["loglaw"] = {"c": float(c), "C": float(C),
                              "residual": float(np.sqrt(np.mean((model - H) ** 2))) if ok else math.inf}
        lo = -2 * np.log(A).min() + 1e-9

        def worst(C):
            return float(np.max(np.abs(np.log(loglaw_ratio(A, H, p, C)))))

        res = minimize_scalar(worst, bounds=(lo, lo + 100.0), method="bounded", options={"xatol": 1e-10})
        band_C = float(res.x)
        ratios = loglaw_ratio(A, H, p, band_C)
    best = min(fits, key=lambda k: fits[k]["residual"])
    return fits, best, band_C, ratios


def growth_sweep(spec: GEquationSpec, p: ArrayLike, A_list: Sequence[float], grid: PeriodicGrid,
                 config: SolverConfig | None = None, method: str = "large_time",
                 t_end_of=None, grid_of=None, **kwargs) -> GrowthFit:
    """H̄(p, A) over ``A_list`` and the three growth-model fits.

    ``t_end_of(A)`` and ``grid_of(A)`` optionally adapt the horizon and grid
    per intensity; large intensities settle faster but need finer cells.
    ``method="control"`` (inviscid only) uses the control-formula solver,
    whose separatrix layers stay sharp at large intensity.
    """
    A_list = [float(a) for a in A_list]
    if any(b <= a for a, b in zip(A_list, A_list[1:])):
        raise ConfigurationError("A_list must be strictly increasing")
    config = config or SolverConfig(t_end=20.0, time_integrator="euler")
    ests = []
    for A in A_list:
        s = replace(spec, flow=spec.flow.with_intensity(A))
        g = grid_of(A) if grid_of else grid
        if method == "large_time":
            cfg = replace(config, t_end=float(t_end_of(A))) if t_end_of else config
            ests.append(hbar_large_time(s, p, cfg, g, **kwargs))
        elif method == "discounted":
            ests.append(hbar_discounted(s, p, g, **kwargs))
        elif method == "control":
            if spec.variant != "inviscid" or spec.laminar != 1.0:
                raise ConfigurationError("the control method covers the inviscid equation with unit laminar speed")
            from ..game import control_hbar
            T = float(t_end_of(A)) if t_end_of else config.t_end
            ests.append(control_hbar(s.flow, p, g, t_end=T, **kwargs))
        else:
            raise ConfigurationError(f"unknown method '{method}'")
    H = np.array([e.value for e in ests])
    fits, best, band_C, ratios = fit_growth(A_list, H, p)
    return GrowthFit(np.asarray(p, dtype=float), np.array(A_list), H, [e.converged for e in ests],
                     fits, best, band_C, ratios, ests)


# ---------------------------------------------------------- curvature effect

@dataclass
class CurvatureComparison:
    A_values: NDArray
    H_plain: NDArray
    H_curved: NDArray
    converged: list[bool]
    d: float

    @property
    def gaps(self) -> NDArray:
        return self.H_plain - self.H_curved

    @property
    def gaps_positive(self) -> bool:
        return bool(np.all(self.gaps > 0))

    @property
    def gaps_increasing(self) -> bool:
        return bool(np.all(np.diff(self.gaps) > 0))

    def rows(self) -> list[dict]:
        return [{"A": float(a), "H_d0": float(h0), "H_d": float(h1), "gap": float(h0 - h1), "converged": c}
                for a, h0, h1, c in zip(self.A_values, self.H_plain, self.H_curved, self.converged)]


def curvature_comparison(p: ArrayLike, d: float, A_list: Sequence[float], grid: PeriodicGrid,
                         config: SolverConfig | None = None, flow: FlowSpec | None = None,
                         **kwargs) -> CurvatureComparison:
    """Paired H̄(p, 0, A) and H̄(p, d, A) in a cellular flow on the same grid."""
    A_list = [float(a) for a in A_list]
    if any(b <= a for a, b in zip(A_list, A_list[1:])):
        raise ConfigurationError("A_list must be strictly increasing")
    flow = flow or FlowSpec("cellular")
    config = config or SolverConfig(t_end=20.0, time_integrator="euler")
    h0, h1, conv = [], [], []
    for A in A_list:
        f = flow.with_intensity(A)
        plain = hbar_large_time(GEquationSpec("inviscid", flow=f), p, config, grid, **kwargs)
        if d == 0:
            curved = plain
        else:
            curved = hbar_large_time(GEquationSpec("curvature", d=d, flow=f), p, config, grid, **kwargs)
        h0.append(plain.value)
        h1.append(curved.value)
        conv.append(bool(plain.converged and curved.converged))
    return CurvatureComparison(np.array(A_list), np.array(h0), np.array(h1), conv, float(d))


# ------------------------------------------------------- homogenization rate

@dataclass
class HomogenizationRate:
    eps: NDArray
    errors: NDArray
    floor: float
    corrected: NDArray
    slope: float | None
    refined_error: float
    hbar: float

    @property
    def exact(self) -> bool:
        return self.slope is None

    def to_dict(self) -> dict:
        return {"eps": self.eps.tolist(), "errors": self.errors.tolist(), "floor": self.floor,
                "corrected": self.corrected.tolist(), "slope": self.slope, "refined_error": self.refined_error,
                "hbar": self.hbar, "exact": self.exact}


def _rate_error(spec: GEquationSpec, p, eps: float, cells: int, transverse: int, t: float, hbar: float,
                cfl: float) -> float:
    n1 = int(round(cells / eps))
    grid = PeriodicGrid(2, (n1, transverse))
    s = replace(spec, flow=spec.flow.scaled(eps))
    res = evolve(s, p, SolverConfig(cfl=cfl, t_end=t, time_integrator="euler"), grid)
    return float(np.max(np.abs(res.final.values + t * hbar)))


def homogenization_rate(spec: GEquationSpec, p: ArrayLike, eps_list: Sequence[float], t_fixed: float = 1.0,
                        cells_per_period: int = 64, transverse_cells: int = 8, min_cells_per_period: int = 32,
                        hbar: float | None = None, cfl: float = 0.5, exact_tol: float = 1e-10) -> HomogenizationRate:
    """Fit ``sup |G^eps - (p.x - t H̄)|`` against ``eps`` on a log-log scale.

    The flow must depend on ``x_1`` only (shear), so the transverse axis
    carries a handful of cells.  The first-order scheme adds an
    eps-independent offset ``t (H̄ - H̄_h)``; it is measured at the finest
    eps as ``2 (e_n - e_2n)`` and subtracted before fitting.
    """
    if spec.flow.kind not in ("shear2d", "zero"):
        raise ConfigurationError("homogenization_rate needs a shear2d (or zero) flow")
    eps_arr = np.array(sorted((float(e) for e in eps_list), reverse=True))
    if eps_arr.size < 2 or np.any(eps_arr <= 0):
        raise ConfigurationError("need at least two positive eps values")
    if cells_per_period < min_cells_per_period:
        raise ResolutionError(f"{cells_per_period} cells per period is below the minimum {min_cells_per_period}")
    p = np.asarray(p, dtype=float)
    if hbar is None:
        if spec.flow.kind == "zero" or spec.flow.A == 0:
            hbar = float(np.linalg.norm(p))
        elif spec.variant == "inviscid":
            prof = spec.flow.profile
            A = spec.flow.A
            hbar = exact_shear_hbar(lambda y: A * np.asarray(prof(y)), p, period=2.0 * math.pi)
        else:
            raise ConfigurationError("hbar must be supplied for non-inviscid variants")
    errs = np.array([_rate_error(spec, p, e, cells_per_period, transverse_cells, t_fixed, hbar, cfl)
                     for e in eps_arr])
    fine = _rate_error(spec, p, eps_arr[-1], 2 * cells_per_period, transverse_cells, t_fixed, hbar, cfl)
    if np.all(errs < exact_tol):
        return HomogenizationRate(eps_arr, errs, 0.0, errs, None, fine, hbar)
    floor = 2.0 * (errs[-1] - fine)
    corrected = errs - floor
    if np.any(corrected <= 0):
        warnings.warn("scheme floor exceeds a measured error; slope uses positive entries only", RuntimeWarning)
    keep = corrected > 0
    slope = float(np.polyfit(np.log(eps_arr[keep]), np.log(corrected[keep]), 1)[0]) if keep.sum() >= 2 else math.nan
    return HomogenizationRate(eps_arr, errs, float(floor), corrected, slope, fine, float(hbar))


# ------------------------------------------------------------------ KPP speed

@dataclass
class KppSpeedResult:
    p: NDArray
    d: float
    f0prime: float
    lambda_star: float
    c_T: float
    samples: list[tuple[float, float]]

    def objective(self, lam: float, hq: float) -> float:
        return (self.f0prime + hq) / lam

    def to_dict(self) -> dict:
        return {"p": self.p.tolist(), "d": self.d, "f0prime": self.f0prime, "lambda_star": self.lambda_star,
                "c_T": self.c_T, "samples": [list(s) for s in self.samples]}


def kpp_speed(flow: FlowSpec, p: ArrayLike, d: float, f0prime: float, grid: PeriodicGrid | None = None,
              lam_range: tuple[float, float] = (1e-2, 1e2), tol: float = 1e-6,
              lambda_schedule: Sequence[float] = (0.2, 0.1, 0.05, 0.025), max_iter: int = 200_000) -> KppSpeedResult:
    """``c_T = inf_l (f'(0) + H̄_quad(l p)) / l`` by golden section over ``log l``."""
    if not d > 0:
        raise ConfigurationError("d must be positive")
    if not f0prime > 0:
        raise ConfigurationError("f0prime must be positive")
    p = np.asarray(p, dtype=float)
    if grid is None:
        grid = PeriodicGrid(flow.dim, 32 if flow.dim == 2 else 16)
    spec = GEquationSpec("quadratic", d=float(d), flow=flow)
    trivial = flow.kind == "zero" or flow.A == 0
    samples: dict[float, float] = {}

    def hq(lam):
        if lam not in samples:
            if trivial:
                samples[lam] = float(d * lam * lam * (p @ p))
            else:
                samples[lam] = hbar_discounted(spec, lam * p, grid, lambda_schedule=lambda_schedule,
                                               max_iter=max_iter).value
        return samples[lam]

    def obj(s):
        lam = math.exp(s)
        return (f0prime + hq(lam)) / lam

    a, b = math.log(lam_range[0]), math.log(lam_range[1])
    # coarse log scan, then golden section around the best sample
    grid_s = np.linspace(a, b, 17)
    vals = [obj(s) for s in grid_s]
    k = int(np.argmin(vals))
    lo, hi = grid_s[max(k - 1, 0)], grid_s[min(k + 1, len(grid_s) - 1)]
    res = minimize_scalar(obj, bounds=(lo, hi), method="bounded", options={"xatol": tol})
    obj(float(res.x))
    pts = sorted(samples.items())
    lam_star, h_star = min(pts, key=lambda lh: (f0prime + lh[1]) / lh[0])
    c_T = (f0prime + h_star) / lam_star
    if k in (0, len(grid_s) - 1):
        warnings.warn(f"KPP minimiser {lam_star:.3g} sits at the edge of {lam_range}", RuntimeWarning)
    return KppSpeedResult(p, float(d), float(f0prime), lam_star, c_T, [(float(l), float(h)) for l, h in pts])
