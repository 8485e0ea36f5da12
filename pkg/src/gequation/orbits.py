"""Streamline integration and ballistic periodic orbits of periodic flows.

A ballistic orbit satisfies ``Phi_{t0}(x0) = x0 + shift`` for a lattice
vector ``shift``; it moves a distance ``|shift|`` per period ``t0`` and gives
the linear lower bound ``(2 pi / t0) A + 2 pi / (t0 max|V|)`` on H̄ along
the shift.  All integration is fixed-step RK4.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba as nb
import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.stats import qmc

from ._kernels import FLOW_CODES, velocity_point
from .errors import ConfigurationError, DimensionError, InapplicableError
from .flowlib import FlowSpec, TWO_PI, eval_velocity, max_projected_speed, max_speed


# ---------------------------------------------------------------- integration

@nb.njit(cache=True)
def _rk4_batch(code, A, coeffs, inv, X, steps, dt, record):
    """Advance every row of ``X`` (m, 3); with ``record`` keep the whole path."""
    m = X.shape[0]
    path = np.empty((steps + 1 if record else 1, m, 3))
    Y = X.copy()
    path[0] = Y
    c0, c1, c2 = coeffs[0], coeffs[1], coeffs[2]
    for k in range(steps):
        for q in range(m):
            y0, y1, y2 = Y[q, 0], Y[q, 1], Y[q, 2]
            a0, a1, a2 = velocity_point(code, A, c0, c1, c2, inv, y0, y1, y2)
            b0, b1, b2 = velocity_point(code, A, c0, c1, c2, inv, y0 + 0.5 * dt * a0, y1 + 0.5 * dt * a1,
                                        y2 + 0.5 * dt * a2)
            e0, e1, e2 = velocity_point(code, A, c0, c1, c2, inv, y0 + 0.5 * dt * b0, y1 + 0.5 * dt * b1,
                                        y2 + 0.5 * dt * b2)
            f0, f1, f2 = velocity_point(code, A, c0, c1, c2, inv, y0 + dt * e0, y1 + dt * e1, y2 + dt * e2)
            Y[q, 0] = y0 + dt / 6 * (a0 + 2 * b0 + 2 * e0 + f0)
            Y[q, 1] = y1 + dt / 6 * (a1 + 2 * b1 + 2 * e1 + f1)
            Y[q, 2] = y2 + dt / 6 * (a2 + 2 * b2 + 2 * e2 + f2)
        if record:
            path[k + 1] = Y
    if not record:
        path[0] = Y
    return path


def _integrate(flow: FlowSpec, X: NDArray, steps: int, dt: float, record: bool) -> NDArray:
    """Fixed-step RK4 for ``xi' = V(xi)``; returns (steps+1, m, dim) or (1, m, dim)."""
    dim = flow.dim
    code = FLOW_CODES.get(flow.kind)
    if code is not None:
        X3 = np.zeros((X.shape[0], 3))
        X3[:, :dim] = X
        out = _rk4_batch(code, float(flow.A), np.asarray(flow.coeffs, dtype=float), 1.0 / flow.scale,
                         X3, int(steps), float(dt), record)
        return out[..., :dim]
    Y = X.astype(float).copy()
    path = [Y.copy()] if record else None
    for _ in range(int(steps)):
        k1 = eval_velocity(flow, Y)
        k2 = eval_velocity(flow, Y + 0.5 * dt * k1)
        k3 = eval_velocity(flow, Y + 0.5 * dt * k2)
        k4 = eval_velocity(flow, Y + dt * k3)
        Y = Y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if record:
            path.append(Y.copy())
    return np.stack(path) if record else Y[None]


def integrate(flow: FlowSpec, x0: ArrayLike, T: float, dt: float = 1e-3) -> NDArray:
    """Streamline path of ``xi' = V(xi)`` sampled at every step.

    ``x0`` may be one point (path shape ``(steps+1, dim)``) or a batch
    ``(m, dim)`` (path shape ``(steps+1, m, dim)``).  The step is ``T / ceil(T / dt)``.
    """
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    if T < 0:
        raise ConfigurationError("T must be nonnegative")
    x0 = np.asarray(x0, dtype=float)
    single = x0.ndim == 1
    X = np.atleast_2d(x0)
    if X.shape[1] != flow.dim:
        raise DimensionError(f"points must have {flow.dim} components")
    steps = int(math.ceil(T / dt - 1e-12)) if T > 0 else 0
    h = T / steps if steps else 0.0
    path = _integrate(flow, X, steps, h, True)
    return path[:, 0] if single else path


def flow_map(flow: FlowSpec, X: ArrayLike, t: float, dt: float = 1e-3) -> NDArray:
    """Endpoints ``Phi_t(X)`` for a batch ``(m, dim)`` (or a single point)."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if t <= 0:
        return X.copy()
    steps = int(math.ceil(t / dt - 1e-12))
    out = _integrate(flow, X2, steps, t / steps, False)[0]
    return out[0] if single else out


def flow_map_jacobian(flow: FlowSpec, x: ArrayLike, t: float, dt: float = 1e-3, eps: float = 1e-6) -> NDArray:
    """Central finite-difference Jacobian of ``Phi_t`` at ``x``."""
    x = np.asarray(x, dtype=float)
    d = x.size
    E = np.eye(d) * eps
    Y = flow_map(flow, np.concatenate([x + E, x - E]), t, dt)
    return ((Y[:d] - Y[d:]) / (2 * eps)).T


# ---------------------------------------------------------------- ballistic orbits

@dataclass
class OrbitResult:
    """Best ballistic orbit found; ``found`` is false when no seed met the tolerance."""

    x0: NDArray
    t0: float
    shift: NDArray
    residual: float
    found: bool = True
    dt: float = 1e-3
    candidates: list[dict] = field(default_factory=list)
    seeds_tried: int = 0
    axis: int | None = None

    @property
    def progress_axis(self) -> int:
        return int(np.argmax(np.abs(self.shift))) if self.axis is None else self.axis

    @property
    def speed_coeff(self) -> float:
        """Progress along the requested axis per unit time, ``|shift_k| / t0``."""
        return abs(float(self.shift[self.progress_axis])) / self.t0

    def to_dict(self) -> dict:
        return {"x0": self.x0.tolist(), "t0": self.t0, "shift": self.shift.tolist(),
                "residual": self.residual, "speed_coeff": self.speed_coeff, "found": self.found,
                "dt": self.dt, "seeds_tried": self.seeds_tried, "candidates": self.candidates}

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def path(self, flow: FlowSpec, periods: float = 1.0) -> NDArray:
        return integrate(flow, self.x0, periods * self.t0, self.dt)

    def to_csv(self, path: str | Path, flow: FlowSpec, stride: int = 10) -> None:
        pts = self.path(flow)[::stride]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + ["x", "y", "z"][: pts.shape[1]])
            h = self.t0 / (len(self.path(flow)) - 1)
            for k, x in enumerate(pts):
                w.writerow([repr(k * stride * h)] + [repr(float(c)) for c in x])


def parse_shift(shift: str | ArrayLike, dim: int = 3) -> NDArray:
    """``"x"``, ``"y"``, ``"z"`` or an explicit vector of lattice multiples of 2π."""
    if isinstance(shift, str) and shift.strip().lower() in ("x", "y", "z"):
        out = np.zeros(dim)
        out["xyz".index(shift.strip().lower())] = TWO_PI
        return out
    if isinstance(shift, str):
        shift = [float(c) for c in shift.split(",")]
    out = np.asarray(shift, dtype=float).ravel()
    if out.size != dim or not np.any(out):
        raise ConfigurationError(f"shift must be a nonzero {dim}-vector")
    return out


def return_residual(flow: FlowSpec, x0: ArrayLike, t0: float, shift: ArrayLike, dt: float = 1e-3) -> float:
    """``|Phi_{t0}(x0) - x0 - shift|``."""
    x0 = np.asarray(x0, dtype=float)
    return float(np.linalg.norm(flow_map(flow, x0, t0, dt) - x0 - np.asarray(shift, dtype=float)))


def _section_axes(shift: NDArray) -> tuple[int, list[int]]:
    k = int(np.argmax(np.abs(shift)))
    return k, [i for i in range(shift.size) if i != k]


def default_seeds(flow: FlowSpec, shift: NDArray, grid: int = 16) -> NDArray:
    """Seeds on the section through the origin normal to the dominant shift axis.

    A ``grid x grid`` cell-centered lattice, points on the two diagonal lines,
    and the quarter-period lattice ``(pi/2) {0,1,2,3}^2``, where the catalog
    flows' reflection symmetries place their symmetric orbits.
    """
    k, rest = _section_axes(shift)
    u = (np.arange(grid) + 0.5) * (TWO_PI / grid)
    q = np.arange(4) * (0.5 * math.pi)
    s = np.linspace(0.0, TWO_PI, 2 * grid, endpoint=False)
    planes = [np.stack(np.meshgrid(q, q, indexing="ij"), -1).reshape(-1, 2),
              np.stack(np.meshgrid(u, u, indexing="ij"), -1).reshape(-1, 2),
              np.stack([s, s], -1), np.stack([s, (TWO_PI - s) % TWO_PI], -1)]
    ab = np.concatenate(planes)
    pts = np.zeros((ab.shape[0], 3))
    pts[:, rest[0]] = ab[:, 0]
    pts[:, rest[1]] = ab[:, 1]
    return pts[:, : flow.dim]


def _newton(flow: FlowSpec, x0: NDArray, t0: float, shift: NDArray, rest: list[int], dt: float,
            max_iter: int, fd_step: float, tol: float) -> tuple[NDArray, float, float]:
    """Gauss–Newton on ``(x0[rest], t0)`` with ``x0[k]`` pinned to the section."""
    x = x0.copy()
    t = float(t0)
    best = (x.copy(), t, math.inf)
    for _ in range(max_iter):
        if not (t > 0 and np.all(np.isfinite(x))):
            break
        pts = np.stack([x] + [x + fd_step * np.eye(x.size)[i] for i in rest])
        Y = flow_map(flow, pts, t, dt)
        F = Y[0] - x - shift
        r = float(np.linalg.norm(F))
        if r < best[2]:
            best = (x.copy(), t, r)
        if r < tol:
            break
        J = np.empty((x.size, len(rest) + 1))
        for c, i in enumerate(rest):
            J[:, c] = (Y[c + 1] - (x + fd_step * np.eye(x.size)[i]) - shift - F) / fd_step
        J[:, -1] = eval_velocity(flow, Y[0])
        step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        # damp long steps: the return map is strongly nonlinear away from the orbit
        scale = min(1.0, 0.5 / max(float(np.max(np.abs(step))), 1e-300))
        for c, i in enumerate(rest):
            x[i] += scale * step[c]
        t += scale * step[-1]
    return best


def shoot_ballistic(flow: FlowSpec, shift: str | ArrayLike = "x", seeds: ArrayLike | None = None,
                    t_window: tuple[float, float] = (0.5, 40.0), dt: float = 1e-3, tol: float = 1e-8,
                    max_iter: int = 50, fd_step: float = 1e-6, candidates_per_seed: int = 3,
                    newton_budget: int = 60, transverse_lattice: bool = False) -> OrbitResult:
    """Search for ``x0`` on the section and ``t0`` with ``Phi_{t0}(x0) = x0 + shift``.

    Each seed is integrated over ``t_window``; the times where the dominant
    coordinate crosses ``x0_k + shift_k`` are located by root bracketing on the
    sampled path and ranked by the transverse miss.  The best
    ``newton_budget`` candidates go to Gauss–Newton.  Converged orbits are
    deduplicated modulo the lattice and the time shift along the orbit; the
    one with the smallest period is returned (strongest lower bound), ties
    broken by residual.
    """
    if flow.dim != 3:
        raise DimensionError("ballistic shooting needs a 3D flow")
    shift = parse_shift(shift, 3)
    k, rest = _section_axes(shift)
    S = default_seeds(flow, shift) if seeds is None else np.atleast_2d(np.asarray(seeds, dtype=float))
    if S.shape[1] != 3:
        raise DimensionError("seeds must be 3D points")
    t_lo, t_hi = map(float, t_window)
    coarse = 0.01
    steps = int(math.ceil(t_hi / coarse))
    path = _integrate(flow, S, steps, t_hi / steps, True)
    times = np.arange(steps + 1) * (t_hi / steps)
    cands = []
    for j in range(S.shape[0]):
        g = path[:, j, k] - S[j, k] - shift[k]
        idx = np.nonzero((np.sign(g[:-1]) != np.sign(g[1:])) & (times[1:] >= t_lo))[0]
        for i in idx[:candidates_per_seed]:
            w = g[i] / (g[i] - g[i + 1])
            pt = path[i, j] + w * (path[i + 1, j] - path[i, j])
            gap = pt[rest] - S[j, rest] - shift[rest]
            lat = TWO_PI * np.round(gap / TWO_PI) if transverse_lattice else np.zeros(2)
            sh = shift.copy()
            sh[rest] += lat
            miss = float(np.linalg.norm(gap - lat))
            cands.append((miss, j, times[i] + w * (times[i + 1] - times[i]), tuple(sh)))
    cands.sort()
    found, best_any = [], None
    for miss, j, t0, sh in cands[:newton_budget]:
        sh = np.array(sh)
        x, t, r = _newton(flow, S[j].copy(), t0, sh, rest, dt, max_iter, fd_step, tol)
        if best_any is None or r < best_any[2]:
            best_any = (x, t, r, sh)
        if r < tol and t > 0:
            if not any(abs(t - f[1]) < 1e-4 and _same_orbit(flow, x, f[0], t, dt) for f in found):
                found.append((x, t, r, sh))
    records = [{"x0": f[0].tolist(), "t0": f[1], "residual": f[2], "shift": f[3].tolist(),
                "speed_coeff": abs(float(shift[k])) / f[1]} for f in found]
    if not found:
        x, t, r, sh = best_any if best_any else (S[0], math.nan, math.inf, shift)
        return OrbitResult(np.asarray(x), float(t), sh, float(r), False, dt, records, S.shape[0], k)
    found.sort(key=lambda f: (round(f[1], 6), f[2], tuple(np.round(f[0], 9))))
    x, t, r, sh = found[0]
    return OrbitResult(x, float(t), sh, float(r), True, dt, records, S.shape[0], k)


def _same_orbit(flow: FlowSpec, a: NDArray, b: NDArray, t0: float, dt: float, tol: float = 1e-4) -> bool:
    """``b`` lies within ``tol`` (mod lattice) of the orbit through ``a``."""
    pts = integrate(flow, a, t0, max(dt, t0 / 4000))
    diff = pts - b
    diff -= TWO_PI * np.round(diff / TWO_PI)
    return bool(np.min(np.linalg.norm(diff, axis=1)) < tol * 100)


def permute_orbit(orbit: OrbitResult) -> OrbitResult:
    """Cyclic image ``(z, x, y)`` of an orbit; valid for flows with that symmetry (1-1-1 ABC)."""
    p = [2, 0, 1]
    return OrbitResult(orbit.x0[p], orbit.t0, orbit.shift[p], orbit.residual, orbit.found, orbit.dt,
                       axis=(orbit.progress_axis + 1) % 3)


def return_defect(flow: FlowSpec, orbit: OrbitResult, dt: float) -> float:
    """Return-map residual of the orbit re-integrated with step ``dt``."""
    return return_residual(flow, orbit.x0, orbit.t0, orbit.shift, dt)


def ballistic_check(flow: FlowSpec, orbit: OrbitResult, periods: int = 5) -> float:
    """``|Phi_{periods t0}(x0) - x0 - periods shift|``."""
    return return_residual(flow, orbit.x0, periods * orbit.t0, periods * orbit.shift, orbit.dt)


def jacobian_determinants(flow: FlowSpec, orbit: OrbitResult, samples: int = 8) -> NDArray:
    """Determinant of the flow-map Jacobian from ``x0`` to evenly spaced times along one period."""
    ts = orbit.t0 * (np.arange(1, samples + 1) / samples)
    return np.array([np.linalg.det(flow_map_jacobian(flow, orbit.x0, t, orbit.dt)) for t in ts])


# ---------------------------------------------------------------- growth bounds

@dataclass
class GrowthBounds:
    """Two-sided linear band on H̄(p, A) over ``A_values``."""

    lower_slope: float
    lower_intercept: float
    upper_slope: float
    upper_intercept: float
    A_values: NDArray

    @property
    def lower(self) -> NDArray:
        return self.lower_slope * self.A_values + self.lower_intercept

    @property
    def upper(self) -> NDArray:
        return self.upper_slope * self.A_values + self.upper_intercept

    @property
    def valid(self) -> bool:
        return bool(np.all(self.lower < self.upper))

    def rows(self) -> list[dict]:
        return [{"A": float(a), "lower": float(lo), "upper": float(up)}
                for a, lo, up in zip(self.A_values, self.lower, self.upper)]

    def to_dict(self) -> dict:
        return {"lower_slope": self.lower_slope, "lower_intercept": self.lower_intercept,
                "upper_slope": self.upper_slope, "upper_intercept": self.upper_intercept,
                "valid": self.valid, "rows": self.rows()}


def growth_bounds(orbit: OrbitResult, flow: FlowSpec, p: ArrayLike,
                  A_range: Sequence[float] = tuple(range(0, 11))) -> GrowthBounds:
    """``(2pi/t0) A + 2pi/(t0 max|V|) <= H̄(p, A) <= max|V.p| A + 1`` for unit ``p`` along the progress axis.

    Non-unit ``p`` scales both lines by ``|p|`` (H̄ is positively homogeneous).
    """
    if not orbit.found:
        raise InapplicableError("no ballistic orbit was found")
    p = np.asarray(p, dtype=float).ravel()
    norm = float(np.linalg.norm(p))
    if norm == 0 or p.size != orbit.shift.size:
        raise InapplicableError("p must be a nonzero vector of the orbit's dimension")
    e = np.zeros(p.size)
    e[orbit.progress_axis] = 1.0
    if abs(abs(float(e @ p)) - norm) > 1e-12 * norm:
        raise InapplicableError("p must lie along the orbit's progress axis")
    unit = flow.with_intensity(1.0)
    c = orbit.speed_coeff
    vmax = max_speed(unit)
    return GrowthBounds(c * norm, c / vmax * norm, max_projected_speed(unit, p), norm,
                        np.asarray(A_range, dtype=float))


def lagrangian_limit(flow: FlowSpec, p: ArrayLike, T: float = 500.0, seed_count: int = 64,
                     extra_seeds: ArrayLike | None = None, dt: float = 1e-2, seed: int = 0) -> float:
    """``max`` over seeds of ``(xi(T) - xi(0)).p / T`` along ``xi' = V(xi)`` at unit intensity.

    Seeds are a scrambled Sobol sample of the period cell plus ``extra_seeds``.
    """
    p = np.asarray(p, dtype=float).ravel()
    unit = flow.with_intensity(1.0)
    if p.size != unit.dim:
        raise DimensionError(f"p must have {unit.dim} components")
    X = qmc.Sobol(unit.dim, scramble=True, seed=seed).random(seed_count) * TWO_PI
    if extra_seeds is not None:
        X = np.concatenate([X, np.atleast_2d(np.asarray(extra_seeds, dtype=float))])
    if unit.kind == "zero":
        return 0.0
    Y = flow_map(unit, X, T, dt)
    return float(np.max((Y - X) @ p) / T)


def zero_of_velocity(flow: FlowSpec, guess: ArrayLike, tol: float = 1e-13) -> NDArray:
    """Newton iteration for a stagnation point ``V(x) = 0`` from ``guess``."""
    from .flowlib import eval_jacobian

    x = np.asarray(guess, dtype=float).copy()
    for _ in range(100):
        v = eval_velocity(flow, x)
        if np.linalg.norm(v) < tol:
            break
        x -= np.linalg.lstsq(eval_jacobian(flow, x), v, rcond=None)[0]
    return x
