"""Explicit monotone time stepping of G-equations in corrector form.

The level-set function is written ``G = p.x + v`` with ``v`` periodic, and
``v_t + H(x, p + Dv, D^2 v) = 0`` is advanced on the torus with a local
Lax–Friedrichs flux.  Variants:

=========== ===================================================
inviscid    a|q| + V.q
viscous     a|q| + V.q - d lap v
curvature   a (1 - d kappa)_+ |q| + V.q,  kappa = div(q/|q|_eps)
strain      a (1 + d q.Sq/|q|_eps^2)_+ |q| + V.q
quadratic   d|q|^2 + V.q
=========== ===================================================

with ``q = p + Dv`` and ``V`` the flow including its intensity.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _kernels
from .errors import ConfigurationError, DimensionError, DivergenceError, StabilityError
from .flowlib import FlowSpec, eval_strain, eval_velocity
from .grid import PeriodicGrid, ScalarField, central_arrays, curvature_array, default_eps

VARIANTS = ("inviscid", "viscous", "curvature", "strain", "quadratic")
_CODES = dict(zip(VARIANTS, range(5)))
INTEGRATORS = ("euler", "tvd_rk2")
SPATIAL_ORDERS = (1, 5)


@dataclass(frozen=True)
class GEquationSpec:
    """Which G-equation to solve.

    ``laminar`` is a positive constant, a callable on points ``(..., dim)``,
    or a ``ScalarField`` on the solver grid.
    """

    variant: str = "inviscid"
    d: float = 0.0
    cutoff: bool = True
    laminar: float | Callable | ScalarField = 1.0
    flow: FlowSpec = field(default_factory=lambda: FlowSpec("zero"))

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant '{self.variant}'")
        if not (math.isfinite(self.d) and self.d >= 0):
            raise ConfigurationError("d must be finite and >= 0")
        if isinstance(self.laminar, (int, float)) and not self.laminar > 0:
            raise ConfigurationError("laminar speed must be positive")

    def to_dict(self) -> dict:
        lam = float(self.laminar) if isinstance(self.laminar, (int, float)) else "field"
        return {"variant": self.variant, "d": self.d, "cutoff": self.cutoff, "laminar": lam,
                "flow": self.flow.flow_id(), "A": self.flow.A, "scale": self.flow.scale}


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping controls.

    ``checkpoints`` are extra times at which the run lands exactly and stores
    a snapshot; ``snapshot_stride = 0`` stores only checkpoints and the end.
    """

    cfl: float = 0.5
    eps_curv: float | None = None
    t_end: float = 1.0
    snapshot_stride: int = 0
    time_integrator: str = "tvd_rk2"
    checkpoints: tuple[float, ...] = ()
    max_steps: int | None = None
    spatial_order: int = 1

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ConfigurationError("cfl must lie in (0, 1]")
        if not self.t_end > 0:
            raise ConfigurationError("t_end must be positive")
        if self.time_integrator not in INTEGRATORS:
            raise ConfigurationError(f"time_integrator must be one of {INTEGRATORS}")
        if self.snapshot_stride < 0:
            raise ConfigurationError("snapshot_stride must be >= 0")
        if self.spatial_order not in SPATIAL_ORDERS:
            raise ConfigurationError(f"spatial_order must be one of {SPATIAL_ORDERS}")

    def to_dict(self) -> dict:
        return {"cfl": self.cfl, "eps_curv": self.eps_curv, "t_end": self.t_end,
                "snapshot_stride": self.snapshot_stride, "time_integrator": self.time_integrator,
                "checkpoints": list(self.checkpoints), "spatial_order": self.spatial_order}


@dataclass
class EvolutionResult:
    times: NDArray
    fields: list[ScalarField]
    front_speed_series: NDArray
    mean_times: NDArray
    mean_values: NDArray
    steps: int
    p: NDArray
    spec: GEquationSpec

    @property
    def final(self) -> ScalarField:
        return self.fields[-1]

    def field_at(self, t: float, tol: float = 1e-9) -> ScalarField:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}")
        return self.fields[i]


def _laminar_values(spec: GEquationSpec, grid: PeriodicGrid) -> NDArray:
    lam = spec.laminar
    if isinstance(lam, ScalarField):
        if lam.grid.shape != grid.shape:
            raise DimensionError("laminar field lives on a different grid")
        vals = lam.values
    elif callable(lam):
        vals = np.asarray(lam(grid.points()), dtype=float) * np.ones(grid.shape)
    else:
        vals = np.full(grid.shape, float(lam))
    if np.min(vals) <= 0:
        raise ConfigurationError("laminar speed must stay positive")
    return vals


def _embed(flow: FlowSpec, grid: PeriodicGrid, ncomp: int) -> NDArray:
    """Grid cell centers padded with zeros up to the flow dimension."""
    pts = grid.points()
    if ncomp > grid.dim:
        pts = np.concatenate([pts, np.zeros(pts.shape[:-1] + (ncomp - grid.dim,))], axis=-1)
    return pts


def _check_p(spec: GEquationSpec, grid: PeriodicGrid, p: ArrayLike) -> NDArray:
    p = np.asarray(p, dtype=float).ravel()
    fd = spec.flow.dim
    if fd == grid.dim:
        if p.size != grid.dim:
            raise DimensionError(f"p must have {grid.dim} components")
    elif fd == grid.dim + 1 and spec.flow.kind in ("shear3d", "zero"):
        if p.size != fd:
            raise DimensionError("extruded problems need p with flow.dim components")
    else:
        raise DimensionError(f"flow of dimension {fd} cannot run on a {grid.dim}D grid")
    if not np.all(np.isfinite(p)):
        raise ConfigurationError("p must be finite")
    return p


class Discretization:
    """Per-cell coefficient arrays for one (spec, grid, p) triple.

    ``order=5`` swaps the first differences inside the flux for WENO5 slopes;
    the result is sharper at large intensity but no longer monotone.
    """

    def __init__(self, spec: GEquationSpec, grid: PeriodicGrid, p: ArrayLike, eps: float | None = None,
                 order: int = 1):
        if order not in SPATIAL_ORDERS:
            raise ConfigurationError(f"order must be one of {SPATIAL_ORDERS}")
        self.order = order
        self.spec = spec
        self.grid = grid
        self.p = _check_p(spec, grid, p)
        self.eps = default_eps(self.p) if eps is None else float(eps)
        ncomp = spec.flow.dim
        pts = _embed(spec.flow, grid, ncomp)
        shape = grid.shape
        self.adv = np.zeros((3,) + shape)
        self.S = np.zeros((3, 3) + shape)
        self.snorm = np.zeros(shape)
        if spec.flow.kind != "zero" and spec.flow.A != 0:
            V = eval_velocity(spec.flow, pts)
            for k in range(ncomp):
                self.adv[k] = V[..., k]
            if spec.variant == "strain":
                S = eval_strain(spec.flow, pts)
                for a in range(ncomp):
                    for b in range(ncomp):
                        self.S[a, b] = S[..., a, b]
                self.snorm = np.max(np.abs(np.linalg.eigvalsh(S)), axis=-1)
        self.lam = _laminar_values(spec, grid)
        self.p3 = np.zeros(3)
        self.p3[: self.p.size] = self.p
        self.code = _CODES[spec.variant]
        self._out = np.empty(shape)
        if order == 5:
            self._Dm = np.empty((grid.dim,) + shape)
            self._Dp = np.empty((grid.dim,) + shape)
        else:
            self._Dm = self._Dp = np.zeros((grid.dim,) + (1,) * grid.dim)

    def _weno(self, v: NDArray) -> None:
        sp = self.grid.spacing
        if self.grid.dim == 2:
            _kernels.weno2d(v, sp[0], sp[1], self._Dm, self._Dp)
        else:
            _kernels.weno3d(v, sp[0], sp[1], sp[2], self._Dm, self._Dp)

    def flux(self, v: NDArray, out: NDArray | None = None) -> tuple[NDArray, float]:
        """Numerical Hamiltonian at every cell and the explicit-step rate bound."""
        out = np.empty(self.grid.shape) if out is None else out
        v = np.ascontiguousarray(v, dtype=float)
        sp = self.grid.spacing
        s = self.spec
        high = self.order == 5
        if high:
            self._weno(v)
        if self.grid.dim == 2:
            rate = _kernels.flux2d(v, sp[0], sp[1], self.p3, self.code, float(s.d), bool(s.cutoff),
                                   self.eps, self.lam, self.adv, self.S, self.snorm, out, high, self._Dm, self._Dp)
        else:
            rate = _kernels.flux3d(v, sp[0], sp[1], sp[2], self.p3, self.code, float(s.d), bool(s.cutoff),
                                   self.eps, self.lam, self.adv, self.S, self.snorm, out, high, self._Dm, self._Dp)
        return out, float(rate)

    def stable_dt(self, v: NDArray) -> float:
        """Largest monotone Euler step for the field ``v``."""
        _, rate = self.flux(v)
        return math.inf if rate <= 0 else 1.0 / rate

    def euler(self, v: NDArray, dt: float, cfl: float = 1.0) -> NDArray:
        F, rate = self.flux(v)
        if dt * rate > cfl * (1.0 + 1e-12):
            raise StabilityError(f"dt={dt:.3e} exceeds stability bound {cfl / rate:.3e}")
        return v - dt * F

    def advance(self, v: NDArray, dt: float, integrator: str, cfl: float = 1.0) -> NDArray:
        if integrator == "euler":
            return self.euler(v, dt, cfl)
        v1 = self.euler(v, dt, cfl)
        v2 = self.euler(v1, dt, cfl)
        return 0.5 * (v + v2)


def numerical_hamiltonian(spec: GEquationSpec, p: ArrayLike, x: ArrayLike, Dminus: ArrayLike,
                          Dplus: ArrayLike, curvature_term: float = 0.0, eps: float | None = None,
                          laminar: float | None = None) -> float:
    """Local Lax–Friedrichs flux at a single point.

    ``curvature_term`` is the mean curvature for the curvature variant and the
    Laplacian of ``v`` for the viscous variant; it is ignored otherwise.
    ``Dminus``/``Dplus`` have one entry per grid axis; when ``p`` has one more
    component the extra slope is frozen (extruded direction).
    """
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    Dm = np.asarray(Dminus, dtype=float)
    Dp = np.asarray(Dplus, dtype=float)
    ng = Dm.size
    nc = p.size
    flow = spec.flow
    xf = np.zeros(flow.dim)
    xf[: min(x.size, flow.dim)] = x[: flow.dim]
    V = np.zeros(nc)
    if flow.kind != "zero":
        V[: flow.dim] = eval_velocity(flow, xf)[:nc]
    q = p.copy()
    q[:ng] += 0.5 * (Dm + Dp)
    qn2 = float(q @ q)
    qn = math.sqrt(qn2)
    if laminar is None:
        lam = spec.laminar
        if isinstance(lam, ScalarField):
            raise ConfigurationError("pass the local laminar value for field-valued laminar speeds")
        a = float(lam(x)) if callable(lam) else float(lam)
    else:
        a = float(laminar)
    d = spec.d
    if eps is None:
        eps = default_eps(p)
    if spec.variant == "quadratic":
        H = d * qn2 + V @ q
        alpha = 2 * d * np.maximum(np.abs(p[:ng] + Dm), np.abs(p[:ng] + Dp)) + np.abs(V[:ng])
    else:
        if spec.variant == "curvature":
            s = a * (1 - d * curvature_term)
        elif spec.variant == "strain":
            S = np.zeros((nc, nc))
            if flow.kind != "zero":
                S[: flow.dim, : flow.dim] = eval_strain(flow, xf)[:nc, :nc]
            s = a * (1 + d * float(q @ S @ q) / (qn2 + eps * eps))
        else:
            s = a
        if spec.cutoff:
            s = max(s, 0.0)
        H = s * qn + V @ q
        if spec.variant == "strain":
            Sfull = eval_strain(flow, xf) if flow.kind != "zero" else np.zeros((flow.dim, flow.dim))
            lam_b = a * (1 + 3 * d * float(np.max(np.abs(np.linalg.eigvalsh(Sfull)))))
        else:
            lam_b = abs(s)
        alpha = lam_b + np.abs(V[:ng])
        if spec.variant == "viscous":
            H -= d * curvature_term
    return float(H - np.sum(alpha * (Dp - Dm)) / 2)


def analytic_hamiltonian(spec: GEquationSpec, p: ArrayLike, x: ArrayLike, q_grad: ArrayLike,
                         curvature_term: float = 0.0, eps: float | None = None) -> float:
    """``H(x, p + q_grad, .)`` evaluated directly from its definition."""
    p = np.asarray(p, dtype=float)
    q = p.copy()
    g = np.asarray(q_grad, dtype=float)
    q[: g.size] += g
    flow = spec.flow
    xf = np.zeros(flow.dim)
    xf[: min(np.size(x), flow.dim)] = np.asarray(x, dtype=float)[: flow.dim]
    V = eval_velocity(flow, xf)[: q.size] if flow.kind != "zero" else np.zeros(q.size)
    a = float(spec.laminar(x)) if callable(spec.laminar) else float(spec.laminar)
    if spec.variant == "quadratic":
        return float(spec.d * q @ q + V @ q)
    if eps is None:
        eps = default_eps(p)
    if spec.variant == "curvature":
        factor = 1 - spec.d * curvature_term
    elif spec.variant == "strain":
        S = eval_strain(flow, xf)[: q.size, : q.size] if flow.kind != "zero" else np.zeros((q.size, q.size))
        factor = 1 + spec.d * float(q @ S @ q) / (float(q @ q) + eps * eps)
    else:
        factor = 1.0
    if spec.cutoff:
        factor = max(factor, 0.0)
    H = a * factor * math.sqrt(float(q @ q)) + float(V @ q)
    if spec.variant == "viscous":
        H -= spec.d * curvature_term
    return H


def step(v: ScalarField, spec: GEquationSpec, p: ArrayLike, dt: float, integrator: str = "euler",
         cfl: float = 1.0, eps: float | None = None) -> ScalarField:
    """One explicit step; refuses ``dt`` above ``cfl`` times the monotonicity bound."""
    if integrator not in INTEGRATORS:
        raise ConfigurationError(f"integrator must be one of {INTEGRATORS}")
    disc = Discretization(spec, v.grid, p, eps)
    return ScalarField(v.grid, disc.advance(v.values, float(dt), integrator, cfl))


def stable_dt(v: ScalarField, spec: GEquationSpec, p: ArrayLike, eps: float | None = None) -> float:
    return Discretization(spec, v.grid, p, eps).stable_dt(v.values)


def evolve(spec: GEquationSpec, p: ArrayLike, config: SolverConfig, grid: PeriodicGrid,
           v0: ScalarField | NDArray | None = None,
           discretization: Discretization | None = None) -> EvolutionResult:
    """Advance from ``v0`` (default 0) to ``config.t_end`` with automatic time steps."""
    disc = discretization or Discretization(spec, grid, p, config.eps_curv, config.spatial_order)
    if v0 is None:
        v = np.zeros(grid.shape)
    else:
        v = np.array(v0.values if isinstance(v0, ScalarField) else v0, dtype=float)
        if v.shape != grid.shape:
            raise DimensionError("initial field does not match the grid")
    t_end = float(config.t_end)
    cps = sorted({float(c) for c in config.checkpoints if 0 < c < t_end} | {t_end})
    times = [0.0]
    fields = [ScalarField(grid, v.copy())]
    mt = [0.0]
    mv = [float(np.mean(v))]
    t = 0.0
    n = 0
    ci = 0
    cfl = config.cfl
    integrator = config.time_integrator
    while ci < len(cps):
        target = cps[ci]
        F, rate = disc.flux(v)
        dt = cfl / rate if rate > 0 else target - t
        landing = t + dt >= target - 1e-12 * max(1.0, target)
        if landing:
            dt = target - t
        v_new = v - dt * F
        if integrator == "tvd_rk2":
            F1, rate1 = disc.flux(v_new)
            if dt * rate1 > 1.0 + 1e-12:
                # second stage would lose monotonicity: retry with the stage-two bound
                dt = cfl / rate1
                landing = False
                v_new = v - dt * F
                F1, _ = disc.flux(v_new)
            v_new = 0.5 * (v + v_new - dt * F1)
        n += 1
        if not np.all(np.isfinite(v_new)):
            raise DivergenceError(n, t + dt)
        v = v_new
        t = target if landing else t + dt
        mt.append(t)
        mv.append(float(np.mean(v)))
        if landing:
            ci += 1
        if landing or (config.snapshot_stride and n % config.snapshot_stride == 0):
            if times[-1] < t:
                times.append(t)
                fields.append(ScalarField(grid, v.copy()))
        if config.max_steps is not None and n >= config.max_steps and ci < len(cps):
            raise StabilityError(f"step budget {config.max_steps} exhausted at t={t:.4g}")
    times_a = np.asarray(times)
    means = np.array([f.values.mean() for f in fields])
    speeds = -(means[1:] - means[:-1]) / (times_a[1:] - times_a[:-1])
    return EvolutionResult(times_a, fields, speeds, np.asarray(mt), np.asarray(mv), n, disc.p, spec)


def laminar_factor(spec: GEquationSpec, v: ScalarField, p: ArrayLike, eps: float | None = None) -> NDArray:
    """Local laminar speed ``s_l`` multiplying ``|p + Dv|`` (after cutoff)."""
    p = np.asarray(p, dtype=float)
    a = _laminar_values(spec, v.grid)
    if eps is None:
        eps = default_eps(p)
    if spec.variant == "curvature":
        s = a * (1 - spec.d * curvature_array(v.values, v.grid.spacing, p, eps))
    elif spec.variant == "strain":
        disc = Discretization(spec, v.grid, p, eps)
        g = central_arrays(v.values, v.grid.spacing)
        q = [disc.p3[k] + (g[k] if k < v.grid.dim else 0.0) for k in range(3)]
        qSq = sum(disc.S[i, j] * q[i] * q[j] for i in range(3) for j in range(3))
        s = a * (1 + spec.d * qSq / (sum(qi * qi for qi in q) + eps * eps))
    else:
        s = a
    if spec.cutoff:
        s = np.maximum(s, 0.0)
    return s


@dataclass
class VolumeAverageSeries:
    times: NDArray
    values: NDArray
    running_average: NDArray
    warning: str | None = None


def turbulent_speed_volume_avg(history: EvolutionResult, spec: GEquationSpec | None = None,
                               p: ArrayLike | None = None) -> VolumeAverageSeries:
    """Volume average of ``s_l |p + Dv|`` per snapshot and its running time average."""
    spec = spec or history.spec
    p = history.p if p is None else np.asarray(p, dtype=float)
    msg = None
    if not spec.flow.mean_zero:
        msg = (f"flow '{spec.flow.kind}' is not mean-zero by construction; "
               "the volume average need not match the front speed")
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    vals = []
    for f in history.fields:
        g = central_arrays(f.values, f.grid.spacing)
        q2 = sum((p[k] + g[k]) ** 2 for k in range(f.grid.dim)) + float(np.sum(p[f.grid.dim:] ** 2))
        vals.append(float(np.mean(laminar_factor(spec, f, p) * np.sqrt(q2))))
    vals = np.asarray(vals)
    t = history.times
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(t))])
    run = np.empty_like(vals)
    run[0] = vals[0]
    run[1:] = cum[1:] / t[1:]
    return VolumeAverageSeries(t, vals, run, msg)
