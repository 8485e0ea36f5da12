"""Two-player game values for the curvature G-equation and control-formula tools.

A move is ``x' = x + tau sqrt(2d) b eta + tau^2 eta_perp - tau^2 V(x)`` with
``eta_perp`` the counter-clockwise rotation of ``eta``.  Player I picks
``|eta| <= 1`` to minimize the final payoff, player II the sign ``b``.  Values
are stored as the periodic part ``v`` of ``p.x + v``; the linear part is
carried analytically, so periodic grids suffice.

With ``d = 0`` the game degenerates to the control problem
``xi' = -V(xi) + alpha``.  ``control_evolve`` solves that problem with
characteristics integrated by RK4 over each step and a monotone min over
sampled constant controls; it is the accurate route to inviscid H̄ at large
intensity, where first-order flux schemes smear the separatrix layers.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numba as nb
import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (ConfigurationError, ControlViolationError, DimensionError, ResourceError,
                     StabilityError)
from ._kernels import FLOW_CODES, velocity_point
from .flowlib import FlowSpec, eval_velocity, max_speed
from .grid import PeriodicGrid, ScalarField, interpolate_array
from .hjsolver import Discretization, GEquationSpec

GOLDEN = math.pi * (3.0 - math.sqrt(5.0))


# ---------------------------------------------------------------- configuration

@dataclass
class GameConfig:
    """Game parameters; ``payoff`` is the periodic part (field or callable on points)."""

    tau: float
    d: float
    steps: int
    flow: FlowSpec
    payoff: ScalarField | Callable
    p: ArrayLike | None = None
    grid: PeriodicGrid | None = None
    angles: int = 32
    radii: tuple[float, ...] = (0.0, 0.5, 1.0)
    budget: float = 2e8

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ConfigurationError("tau must be positive")
        if not (math.isfinite(self.d) and self.d >= 0):
            raise ConfigurationError("d must be >= 0")
        if int(self.steps) != self.steps or self.steps < 0:
            raise ConfigurationError("steps must be a nonnegative integer")
        self.steps = int(self.steps)
        if self.angles < 8:
            raise ConfigurationError("need at least 8 angles")
        r = tuple(sorted(float(x) for x in self.radii))
        if not r or r[0] != 0.0 or r[-1] != 1.0 or any(x < 0 or x > 1 for x in r):
            raise ConfigurationError("radii must lie in [0, 1] and include 0 and 1")
        self.radii = r
        if isinstance(self.payoff, ScalarField):
            if self.grid is not None and self.grid.shape != self.payoff.grid.shape:
                raise DimensionError("payoff lives on a different grid")
            self.grid = self.payoff.grid
        elif not callable(self.payoff):
            raise ConfigurationError("payoff must be a ScalarField or a callable")
        if self.grid is None:
            raise ConfigurationError("a callable payoff needs a grid")
        if self.grid.dim != self.flow.dim:
            raise DimensionError("grid and flow dimensions differ")
        dim = self.grid.dim
        self.p = np.zeros(dim) if self.p is None else np.asarray(self.p, dtype=float).ravel()
        if self.p.size != dim:
            raise DimensionError(f"p must have {dim} components")
        reach = self.tau * math.sqrt(2 * self.d) * (math.sqrt(2) if dim == 3 else 1.0) \
            + self.tau ** 2 * (1.0 + self.flow.A * max_speed(self.flow))
        if reach >= 0.5 * min(self.grid.period):
            raise StabilityError(f"one move spans {reach:.3g}, over half the period")

    @classmethod
    def for_horizon(cls, t: float, tau: float, d: float, flow: FlowSpec, payoff, **kw) -> "GameConfig":
        """Move count ``round(t / tau^2)``; the realized horizon is ``steps * tau^2``."""
        return cls(tau, d, int(round(t / tau ** 2)), flow, payoff, **kw)

    @property
    def horizon(self) -> float:
        return self.steps * self.tau ** 2

    def payoff_values(self) -> NDArray:
        if isinstance(self.payoff, ScalarField):
            return self.payoff.values.copy()
        return np.asarray(self.payoff(self.grid.points()), dtype=float) * np.ones(self.grid.shape)

    def payoff_at(self, x: ArrayLike) -> float:
        """Full payoff ``p.x + g(x)`` at one point."""
        x = np.asarray(x, dtype=float)
        if isinstance(self.payoff, ScalarField):
            g = float(interpolate_array(self.payoff.values, self.grid, x[None, :])[0])
        else:
            g = float(np.asarray(self.payoff(x[None, :])).ravel()[0])
        return float(self.p @ x) + g

    def to_dict(self) -> dict:
        return {"tau": self.tau, "d": self.d, "steps": self.steps, "horizon": self.horizon,
                "angles": self.angles, "radii": list(self.radii), "flow": self.flow.flow_id(),
                "A": self.flow.A, "p": self.p.tolist(), "grid": self.grid.to_dict()}


def planar_controls(angles: int, radii: Sequence[float]) -> tuple[NDArray, NDArray]:
    """Sampled ``eta`` and ``eta_perp`` for every (radius, angle) pair; radius 0 once."""
    th = 2 * np.pi * np.arange(angles) / angles
    etas = [np.zeros(2)] if 0.0 in radii else []
    for r in radii:
        if r > 0:
            etas.extend(r * np.stack([np.cos(th), np.sin(th)], axis=-1))
    eta = np.array(etas, dtype=float).reshape(-1, 2)
    perp = np.stack([-eta[:, 1], eta[:, 0]], axis=-1)
    return eta, perp


def sphere_directions(m: int) -> NDArray:
    """Fibonacci lattice of ``m`` unit vectors."""
    i = np.arange(m) + 0.5
    z = 1.0 - 2.0 * i / m
    rho = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    phi = i * GOLDEN
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def orthonormal_frames(count: int, radii: Sequence[float]) -> NDArray:
    """Rows ``(u, v, w)`` scaled by each radius; the ``(v, w)`` pair rotates frame to frame."""
    u = sphere_directions(count)
    ref = np.where(np.abs(u[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    v = np.cross(u, ref)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    w = np.cross(u, v)
    psi = (np.arange(count) * GOLDEN) % (0.5 * np.pi)
    c, s = np.cos(psi)[:, None], np.sin(psi)[:, None]
    v, w = c * v + s * w, -s * v + c * w
    base = np.stack([u, v, w], axis=1)
    frames = [np.zeros((3, 3))] if 0.0 in radii else []
    for r in radii:
        if r > 0:
            frames.extend(r * base)
    return np.array(frames, dtype=float).reshape(-1, 3, 3)


def complete_frame(u: ArrayLike) -> NDArray:
    """Frame ``(u, v, w)`` with ``v, w`` orthogonal to ``u`` and of the same length."""
    u = np.asarray(u, dtype=float)
    r = float(np.linalg.norm(u))
    if r == 0:
        return np.zeros((3, 3))
    e = u / r
    ref = np.array([1.0, 0, 0]) if abs(e[0]) < 0.9 else np.array([0, 1.0, 0])
    v = np.cross(e, ref)
    v /= np.linalg.norm(v)
    return r * np.stack([e, v, np.cross(e, v)])


# ---------------------------------------------------------------- compiled kernels

@nb.njit(cache=True, inline="always")
def _lerp2(v, s0, s1):
    n0, n1 = v.shape
    f0 = math.floor(s0)
    f1 = math.floor(s1)
    w0 = s0 - f0
    w1 = s1 - f1
    i0 = int(f0) % n0
    i1 = int(f1) % n1
    j0 = i0 + 1 if i0 + 1 < n0 else 0
    j1 = i1 + 1 if i1 + 1 < n1 else 0
    return ((1 - w0) * ((1 - w1) * v[i0, i1] + w1 * v[i0, j1])
            + w0 * ((1 - w1) * v[j0, i1] + w1 * v[j0, j1]))


@nb.njit(cache=True, inline="always")
def _lerp3(v, s0, s1, s2):
    n0, n1, n2 = v.shape
    f0 = math.floor(s0)
    f1 = math.floor(s1)
    f2 = math.floor(s2)
    w0 = s0 - f0
    w1 = s1 - f1
    w2 = s2 - f2
    i0 = int(f0) % n0
    i1 = int(f1) % n1
    i2 = int(f2) % n2
    j0 = i0 + 1 if i0 + 1 < n0 else 0
    j1 = i1 + 1 if i1 + 1 < n1 else 0
    j2 = i2 + 1 if i2 + 1 < n2 else 0
    a = (1 - w1) * ((1 - w2) * v[i0, i1, i2] + w2 * v[i0, i1, j2]) \
        + w1 * ((1 - w2) * v[i0, j1, i2] + w2 * v[i0, j1, j2])
    b = (1 - w1) * ((1 - w2) * v[j0, i1, i2] + w2 * v[j0, i1, j2]) \
        + w1 * ((1 - w2) * v[j0, j1, i2] + w2 * v[j0, j1, j2])
    return (1 - w0) * a + w0 * b


@nb.njit(cache=True)
def _ks_sweep2d(v, vel, eta, perp, s, t2, p0, p1, h0, h1, out):
    n0, n1 = v.shape
    C = eta.shape[0]
    for i in range(n0):
        x0 = (i + 0.5) * h0
        for j in range(n1):
            x1 = (j + 0.5) * h1
            a0 = -t2 * vel[0, i, j]
            a1 = -t2 * vel[1, i, j]
            best = np.inf
            for c in range(C):
                d0 = a0 + t2 * perp[c, 0]
                d1 = a1 + t2 * perp[c, 1]
                worst = -np.inf
                for k in range(2):
                    b = 2.0 * k - 1.0
                    e0 = d0 + b * s * eta[c, 0]
                    e1 = d1 + b * s * eta[c, 1]
                    val = p0 * e0 + p1 * e1 + _lerp2(v, (x0 + e0) / h0 - 0.5, (x1 + e1) / h1 - 0.5)
                    if val > worst:
                        worst = val
                if worst < best:
                    best = worst
            out[i, j] = best


@nb.njit(cache=True)
def _ks_sweep3d(v, vel, frames, s, t2, p, h0, h1, h2, out):
    n0, n1, n2 = v.shape
    C = frames.shape[0]
    for i in range(n0):
        x0 = (i + 0.5) * h0
        for j in range(n1):
            x1 = (j + 0.5) * h1
            for l in range(n2):
                x2 = (l + 0.5) * h2
                best = np.inf
                for c in range(C):
                    d0 = t2 * (frames[c, 0, 0] - vel[0, i, j, l])
                    d1 = t2 * (frames[c, 0, 1] - vel[1, i, j, l])
                    d2 = t2 * (frames[c, 0, 2] - vel[2, i, j, l])
                    worst = -np.inf
                    for k in range(4):
                        b = 2.0 * (k & 1) - 1.0
                        cc = 2.0 * (k >> 1) - 1.0
                        e0 = d0 + s * (b * frames[c, 1, 0] + cc * frames[c, 2, 0])
                        e1 = d1 + s * (b * frames[c, 1, 1] + cc * frames[c, 2, 1])
                        e2 = d2 + s * (b * frames[c, 1, 2] + cc * frames[c, 2, 2])
                        val = p[0] * e0 + p[1] * e1 + p[2] * e2 + _lerp3(
                            v, (x0 + e0) / h0 - 0.5, (x1 + e1) / h1 - 0.5, (x2 + e2) / h2 - 0.5)
                        if val > worst:
                            worst = val
                    if worst < best:
                        best = worst
                out[i, j, l] = best


@nb.njit(cache=True)
def _ks_sweep_radial(u, hr, eta, perp, s, t2, out):
    m = u.shape[0]
    C = eta.shape[0]
    slope = (u[m - 1] - u[m - 2]) / hr
    for i in range(m):
        r = i * hr
        best = np.inf
        for c in range(C):
            worst = -np.inf
            for k in range(2):
                b = 2.0 * k - 1.0
                q0 = r + b * s * eta[c, 0] + t2 * perp[c, 0]
                q1 = b * s * eta[c, 1] + t2 * perp[c, 1]
                z = math.sqrt(q0 * q0 + q1 * q1) / hr
                if z >= m - 1:
                    val = u[m - 1] + slope * (z - (m - 1)) * hr
                else:
                    f = math.floor(z)
                    w = z - f
                    a = int(f)
                    val = (1 - w) * u[a] + w * u[a + 1]
                if val > worst:
                    worst = val
            if worst < best:
                best = worst
        out[i] = best


@nb.njit(cache=True)
def _flow_maps(code, A, coeffs, inv, X, dirs, dt, sub):
    """RK4 endpoints of ``y' = -V(y) + dir`` over ``dt`` for every point and direction."""
    N = X.shape[0]
    M = dirs.shape[0]
    out = np.empty((M, N, 3))
    ds = dt / sub
    c0, c1, c2 = coeffs[0], coeffs[1], coeffs[2]
    for m in range(M):
        a0, a1, a2 = dirs[m, 0], dirs[m, 1], dirs[m, 2]
        for q in range(N):
            y0, y1, y2 = X[q, 0], X[q, 1], X[q, 2]
            for _ in range(sub):
                v0, v1, v2 = velocity_point(code, A, c0, c1, c2, inv, y0, y1, y2)
                k10, k11, k12 = a0 - v0, a1 - v1, a2 - v2
                v0, v1, v2 = velocity_point(code, A, c0, c1, c2, inv, y0 + 0.5 * ds * k10, y1 + 0.5 * ds * k11,
                                       y2 + 0.5 * ds * k12)
                k20, k21, k22 = a0 - v0, a1 - v1, a2 - v2
                v0, v1, v2 = velocity_point(code, A, c0, c1, c2, inv, y0 + 0.5 * ds * k20, y1 + 0.5 * ds * k21,
                                       y2 + 0.5 * ds * k22)
                k30, k31, k32 = a0 - v0, a1 - v1, a2 - v2
                v0, v1, v2 = velocity_point(code, A, c0, c1, c2, inv, y0 + ds * k30, y1 + ds * k31, y2 + ds * k32)
                k40, k41, k42 = a0 - v0, a1 - v1, a2 - v2
                y0 += ds / 6 * (k10 + 2 * k20 + 2 * k30 + k40)
                y1 += ds / 6 * (k11 + 2 * k21 + 2 * k31 + k41)
                y2 += ds / 6 * (k12 + 2 * k22 + 2 * k32 + k42)
            out[m, q, 0] = y0 - X[q, 0]
            out[m, q, 1] = y1 - X[q, 1]
            out[m, q, 2] = y2 - X[q, 2]
    return out


@nb.njit(cache=True)
def _control_step2d(v, D, p0, p1, h0, h1, out):
    M = D.shape[0]
    n0, n1 = v.shape
    for i in range(n0):
        x0 = (i + 0.5) * h0
        for j in range(n1):
            x1 = (j + 0.5) * h1
            best = np.inf
            for m in range(M):
                e0 = D[m, i, j, 0]
                e1 = D[m, i, j, 1]
                val = p0 * e0 + p1 * e1 + _lerp2(v, (x0 + e0) / h0 - 0.5, (x1 + e1) / h1 - 0.5)
                if val < best:
                    best = val
            out[i, j] = best


@nb.njit(cache=True)
def _control_step3d(v, D, p, h0, h1, h2, out):
    M = D.shape[0]
    n0, n1, n2 = v.shape
    for i in range(n0):
        x0 = (i + 0.5) * h0
        for j in range(n1):
            x1 = (j + 0.5) * h1
            for l in range(n2):
                x2 = (l + 0.5) * h2
                best = np.inf
                for m in range(M):
                    e0 = D[m, i, j, l, 0]
                    e1 = D[m, i, j, l, 1]
                    e2 = D[m, i, j, l, 2]
                    val = p[0] * e0 + p[1] * e1 + p[2] * e2 + _lerp3(
                        v, (x0 + e0) / h0 - 0.5, (x1 + e1) / h1 - 0.5, (x2 + e2) / h2 - 0.5)
                    if val < best:
                        best = val
                out[i, j, l] = best


# ---------------------------------------------------------------- game values

def _velocity_on_grid(flow: FlowSpec, grid: PeriodicGrid) -> NDArray:
    V = eval_velocity(flow, grid.points())
    return np.ascontiguousarray(np.moveaxis(V, -1, 0))


def ks_value(config: GameConfig) -> ScalarField:
    """Backward dynamic programming over ``steps`` moves (2D); returns the periodic part of the value."""
    if config.grid.dim != 2:
        raise DimensionError("ks_value is planar; use ks3d_value in 3D")
    g = config.grid
    v = config.payoff_values()
    if config.steps == 0:
        return ScalarField(g, v)
    eta, perp = planar_controls(config.angles, config.radii)
    vel = _velocity_on_grid(config.flow, g)
    s = config.tau * math.sqrt(2 * config.d)
    t2 = config.tau ** 2
    out = np.empty_like(v)
    h0, h1 = g.spacing
    for _ in range(config.steps):
        _ks_sweep2d(v, vel, eta, perp, s, t2, config.p[0], config.p[1], h0, h1, out)
        v, out = out, v
    return ScalarField(g, v)


def ks3d_value(config: GameConfig, max_cells: int = 48) -> ScalarField:
    """Three-dimensional game: I picks a frame ``(u, v, w)``, II the signs of ``v`` and ``w``.

    ``config.angles`` counts frame orientations.  Raises ``ResourceError``
    when ``n^3 * K * R`` exceeds ``config.budget`` or an axis exceeds ``max_cells``.
    """
    g = config.grid
    if g.dim != 3:
        raise DimensionError("ks3d_value needs a 3D grid")
    if max(g.n) > max_cells:
        raise ResourceError(f"ks3d_value is limited to {max_cells} cells per axis")
    work = g.size * config.angles * len(config.radii)
    if work > config.budget:
        raise ResourceError(f"n^3 K R = {work:.3g} exceeds the budget {config.budget:.3g}")
    v = config.payoff_values()
    if config.steps == 0:
        return ScalarField(g, v)
    frames = orthonormal_frames(config.angles, config.radii)
    vel = _velocity_on_grid(config.flow, g)
    s = config.tau * math.sqrt(2 * config.d)
    t2 = config.tau ** 2
    out = np.empty_like(v)
    h = g.spacing
    for _ in range(config.steps):
        _ks_sweep3d(v, vel, frames, s, t2, config.p, h[0], h[1], h[2], out)
        v, out = out, v
    return ScalarField(g, v)


@dataclass
class RadialValue:
    """Game value ``u(r)`` of a radial payoff without flow, on nodes ``r_i = i * hr``."""

    r: NDArray
    values: NDArray
    horizon: float

    def zero_radius(self) -> float:
        """Smallest radius where the value changes sign from negative to nonnegative."""
        u = self.values
        k = np.nonzero((u[:-1] < 0) & (u[1:] >= 0))[0]
        if k.size == 0:
            raise ValueError("value has no zero crossing on the radial grid")
        i = int(k[0])
        return float(self.r[i] + (self.r[i + 1] - self.r[i]) * (-u[i]) / (u[i + 1] - u[i]))


def ks_value_radial(tau: float, d: float, steps: int, payoff: Callable[[NDArray], NDArray],
                    r_max: float, nodes: int = 4001, angles: int = 32,
                    radii: Sequence[float] = (0.0, 0.5, 1.0)) -> RadialValue:
    """Planar game with ``V = 0`` and a radial payoff reduced to the radius.

    Rotations commute with the move rule and the control set, so the value
    stays radial and each sweep needs one point per radius.  Beyond ``r_max``
    the value is continued linearly.
    """
    if not (tau > 0 and d >= 0 and r_max > 0 and nodes >= 3):
        raise ConfigurationError("need tau > 0, d >= 0, r_max > 0 and nodes >= 3")
    r = np.linspace(0.0, r_max, nodes)
    hr = r[1] - r[0]
    u = np.asarray(payoff(r), dtype=float).copy()
    eta, perp = planar_controls(angles, tuple(sorted(radii)))
    s = tau * math.sqrt(2 * d)
    out = np.empty_like(u)
    for _ in range(int(steps)):
        _ks_sweep_radial(u, hr, eta, perp, s, tau * tau, out)
        u, out = out, u
    return RadialValue(r, u, steps * tau * tau)


def circle_payoff(grid: PeriodicGrid, center: ArrayLike, radius: float = 0.0) -> ScalarField:
    """Periodic (minimum-image) signed distance ``|x - c| - radius``."""
    return ScalarField(grid, periodic_distance(grid, center) - radius)


def periodic_distance(grid: PeriodicGrid, center: ArrayLike) -> NDArray:
    c = np.asarray(center, dtype=float)
    diff = grid.points() - c
    per = np.asarray(grid.period)
    diff -= per * np.round(diff / per)
    return np.linalg.norm(diff, axis=-1)


def level_radius(values: NDArray, grid: PeriodicGrid, center: ArrayLike, rays: int = 64,
                 r_max: float | None = None, samples: int = 2000) -> float:
    """Mean over rays from ``center`` of the first radius where the field turns nonnegative."""
    c = np.asarray(center, dtype=float)
    r_max = 0.45 * min(grid.period) if r_max is None else r_max
    rr = np.linspace(0.0, r_max, samples)
    th = 2 * np.pi * (np.arange(rays) + 0.5) / rays
    out = []
    for t in th:
        pts = c + rr[:, None] * np.array([np.cos(t), np.sin(t)])
        u = interpolate_array(values, grid, pts)
        k = np.nonzero((u[:-1] < 0) & (u[1:] >= 0))[0]
        if k.size == 0:
            raise ValueError("field has no zero crossing along a ray")
        i = int(k[0])
        out.append(rr[i] + (rr[i + 1] - rr[i]) * (-u[i]) / (u[i + 1] - u[i]))
    return float(np.mean(out))


# ---------------------------------------------------------------- trajectories

@dataclass
class TrajectoryResult:
    """Positions ``points[k]`` after ``k`` moves with the controls of each move.

    In 3D ``etas`` holds player I's frames (shape ``(N, 3, 3)``) and ``signs``
    the pairs ``(b, c)``.
    """

    points: NDArray
    etas: NDArray
    signs: NDArray
    payoff_at_end: float
    tau: float
    d: float

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def move_residual(self, flow: FlowSpec) -> float:
        """Largest deviation of consecutive points from the move rule."""
        x = self.points[:-1]
        s = self.tau * math.sqrt(2 * self.d)
        t2 = self.tau ** 2
        V = eval_velocity(flow, x)
        if self.dim == 2:
            perp = np.stack([-self.etas[:, 1], self.etas[:, 0]], axis=-1)
            pred = x + s * self.signs[:, None] * self.etas + t2 * perp - t2 * V
        else:
            F = self.etas
            pred = x + s * (self.signs[:, :1] * F[:, 1] + self.signs[:, 1:] * F[:, 2]) + t2 * F[:, 0] - t2 * V
        return float(np.max(np.abs(pred - self.points[1:]))) if len(x) else 0.0

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if self.dim == 2:
                w.writerow(["step", "x", "y", "eta_x", "eta_y", "b"])
            else:
                w.writerow(["step", "x", "y", "z", "u_x", "u_y", "u_z", "b", "c"])
            for k, x in enumerate(self.points):
                if k == 0:
                    ctrl = [""] * (3 if self.dim == 2 else 5)
                elif self.dim == 2:
                    ctrl = [repr(float(self.etas[k - 1, 0])), repr(float(self.etas[k - 1, 1])),
                            int(self.signs[k - 1])]
                else:
                    ctrl = [repr(float(c)) for c in self.etas[k - 1, 0]] + [int(c) for c in self.signs[k - 1]]
                w.writerow([k] + [repr(float(c)) for c in x] + ctrl)


def _unit(v: NDArray) -> NDArray:
    n = float(np.linalg.norm(v))
    out = np.zeros_like(v)
    if n > 0:
        out = v / n
    else:
        out[0] = 1.0
    return out


def _drift_to_eta(e: NDArray) -> NDArray:
    """Planar ``eta`` whose rotation ``eta_perp`` equals ``e``."""
    return np.array([e[1], -e[0]])


def resolve_policy(policy: str | Callable, dim: int, x0: ArrayLike) -> Callable:
    """Named policies: ``null``, ``radial_out[:c1,c2(,c3)]`` (center defaults to ``x0``), ``toward:y1,y2``.

    Each one returns the control whose drift term has unit length along the
    named direction (planar ``eta`` or the drift vector ``u`` in 3D).
    """
    if callable(policy):
        return policy
    name, _, arg = str(policy).partition(":")
    name = name.strip().lower()
    coords = np.array([float(c) for c in arg.split(",")]) if arg else None
    if coords is not None and coords.size != dim:
        raise ConfigurationError(f"policy '{policy}' needs {dim} coordinates")

    def as_control(e: NDArray) -> NDArray:
        return _drift_to_eta(e) if dim == 2 else e

    if name == "null":
        return lambda x, k: np.zeros(dim)
    if name == "radial_out":
        c = np.asarray(x0, dtype=float) if coords is None else coords
        return lambda x, k: as_control(_unit(np.asarray(x) - c))
    if name == "toward":
        if coords is None:
            raise ConfigurationError("toward policy needs a target point")
        return lambda x, k: as_control(_unit(coords - np.asarray(x)))
    raise ConfigurationError(f"unknown policy '{policy}'")


def _adversary(policy, dim: int) -> Callable:
    if callable(policy):
        return policy
    seq = np.asarray(policy, dtype=float)
    return lambda x, k: seq[k]


def ks_trajectory(x0: ArrayLike, config: GameConfig, policy_I: str | Callable,
                  policy_II: Callable | Sequence) -> TrajectoryResult:
    """Forward simulation of ``config.steps`` moves under the given policies.

    ``policy_I(x, k)`` returns ``eta`` (2D) or ``u`` / a frame ``(u, v, w)`` (3D);
    ``policy_II(x, k)`` returns ``b`` (2D) or ``(b, c)`` (3D); a sequence of
    signs is accepted in place of ``policy_II``.
    """
    x = np.asarray(x0, dtype=float).copy()
    dim = config.grid.dim
    if x.shape != (dim,):
        raise DimensionError(f"x0 must have {dim} components")
    pI = resolve_policy(policy_I, dim, x)
    pII = _adversary(policy_II, dim)
    s = config.tau * math.sqrt(2 * config.d)
    t2 = config.tau ** 2
    N = config.steps
    pts = np.empty((N + 1, dim))
    pts[0] = x
    etas = np.empty((N, 2)) if dim == 2 else np.empty((N, 3, 3))
    signs = np.empty(N) if dim == 2 else np.empty((N, 2))
    for k in range(N):
        ctl = np.asarray(pI(x, k), dtype=float)
        V = eval_velocity(config.flow, x)
        sg = np.asarray(pII(x, k), dtype=float)
        if dim == 2:
            if ctl.shape != (2,) or np.linalg.norm(ctl) > 1.0 + 1e-12:
                raise ControlViolationError(f"move {k}: |eta| = {np.linalg.norm(ctl):.6g} > 1")
            b = float(sg)
            if b not in (-1.0, 1.0):
                raise ControlViolationError(f"move {k}: sign {b} not in {{-1, +1}}")
            x = x + s * b * ctl + t2 * np.array([-ctl[1], ctl[0]]) - t2 * V
            etas[k], signs[k] = ctl, b
        else:
            F = complete_frame(ctl) if ctl.shape == (3,) else ctl
            if F.shape != (3, 3):
                raise ControlViolationError(f"move {k}: frame must be (3, 3)")
            norms = np.linalg.norm(F, axis=1)
            if np.any(norms > 1.0 + 1e-12) or np.ptp(norms) > 1e-9 \
                    or np.max(np.abs(F @ F.T - np.diag(norms ** 2))) > 1e-9:
                raise ControlViolationError(f"move {k}: frame is not orthogonal with equal lengths <= 1")
            if sg.shape != (2,) or not np.all(np.isin(sg, (-1.0, 1.0))):
                raise ControlViolationError(f"move {k}: signs must be a pair of +-1")
            x = x + s * (sg[0] * F[1] + sg[1] * F[2]) + t2 * F[0] - t2 * V
            etas[k], signs[k] = F, sg
        pts[k + 1] = x
    return TrajectoryResult(pts, etas, signs, config.payoff_at(x), config.tau, config.d)


@dataclass
class ValueCertificate:
    """Upper bound ``max`` over player II responses of the final payoff under a fixed policy."""

    bound: float
    exhaustive: bool
    responses: int
    worst_signs: NDArray

    def to_dict(self) -> dict:
        return {"bound": self.bound, "exhaustive": self.exhaustive, "responses": self.responses,
                "statistical": not self.exhaustive, "worst_signs": self.worst_signs.tolist()}


def certify_upper_bound(x0: ArrayLike, config: GameConfig, policy_I: str | Callable,
                        exhaustive_limit: int = 12, samples: int = 4096,
                        seed: int = 0) -> ValueCertificate:
    """Bound the game value at ``x0`` by simulating ``policy_I`` against open-loop sign sequences.

    Every sign sequence is enumerated when the number of binary choices is at
    most ``exhaustive_limit``; otherwise ``samples`` random sequences are drawn
    and the certificate is only statistical.
    """
    dim = config.grid.dim
    per_move = 1 if dim == 2 else 2
    bits = config.steps * per_move
    if bits <= exhaustive_limit:
        seqs = (np.array(c, dtype=float) for c in itertools.product((-1.0, 1.0), repeat=bits))
        count = 2 ** bits
        exhaustive = True
    else:
        rng = np.random.default_rng(seed)
        seqs = (rng.choice((-1.0, 1.0), size=bits) for _ in range(samples))
        count = samples
        exhaustive = False
    best, worst = -math.inf, np.zeros(bits)
    for seq in seqs:
        signs = seq if dim == 2 else seq.reshape(-1, 2)
        res = ks_trajectory(x0, config, policy_I, signs)
        if res.payoff_at_end > best:
            best, worst = res.payoff_at_end, seq
    return ValueCertificate(float(best), exhaustive, count, worst)


# ---------------------------------------------------------------- control formula

def _flow_displacements(flow: FlowSpec, pts: NDArray, dirs: NDArray, dt: float, sub: int) -> NDArray:
    """``y - x`` after time ``dt`` along ``-V + dir`` for every direction; shape (M, N, dim)."""
    dim = pts.shape[1]
    X = np.zeros((pts.shape[0], 3))
    X[:, :dim] = pts
    D3 = np.zeros((dirs.shape[0], 3))
    D3[:, :dim] = dirs
    code = FLOW_CODES.get(flow.kind)
    if code is not None and flow.A != 0:
        coeffs = np.asarray(flow.coeffs, dtype=float)
        return _flow_maps(code, float(flow.A), coeffs, 1.0 / flow.scale, X, D3, dt, sub)[..., :dim]
    if code is not None:
        return np.broadcast_to(dt * dirs[:, None, :], (dirs.shape[0], pts.shape[0], dim)).copy()
    out = np.empty((dirs.shape[0], pts.shape[0], dim))
    ds = dt / sub
    f = lambda y, a: a - eval_velocity(flow, y)
    for m, a in enumerate(dirs):
        y = pts.copy()
        for _ in range(sub):
            k1 = f(y, a)
            k2 = f(y + 0.5 * ds * k1, a)
            k3 = f(y + 0.5 * ds * k2, a)
            k4 = f(y + ds * k3, a)
            y = y + ds / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[m] = y - pts
    return out


@dataclass
class ControlEvolution:
    """Snapshots of the periodic part ``v`` from the control-formula solver."""

    times: NDArray
    fields: list[ScalarField]
    mean_times: NDArray
    mean_values: NDArray
    dt: float
    steps: int
    directions: int
    p: NDArray

    @property
    def final(self) -> ScalarField:
        return self.fields[-1]

    def field_at(self, t: float, tol: float = 1e-9) -> ScalarField:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}")
        return self.fields[i]


def control_step_size(flow: FlowSpec, step_scale: float) -> float:
    """Step with ``(1 + A max|V|) dt = step_scale``."""
    return step_scale / (1.0 + flow.A * max_speed(flow))


def control_evolve(flow: FlowSpec, p: ArrayLike, grid: PeriodicGrid, t_end: float,
                   v0: ScalarField | NDArray | None = None, directions: int | None = None,
                   step_scale: float = 2.4, checkpoints: Sequence[float] = (),
                   max_bytes: float = 1.5e9, min_steps: int = 1) -> ControlEvolution:
    """Inviscid G-equation for ``p.x + v`` through the control formula.

    One step is ``v(x) <- min_a [p.(y_a - x) + v(y_a)]`` where ``y_a`` is the
    time-``dt`` endpoint of ``xi' = -V(xi) + a`` from ``x`` and ``a`` runs over
    ``directions`` unit vectors (circle or Fibonacci sphere).  Characteristics
    are integrated by RK4 with substeps of at most ``0.1 / (1 + A max|V|)``.
    Multilinear interpolation keeps the step monotone; its diffusion scales
    like ``h^2 / dt``, so long steps are preferred.  Checkpoints snap to the
    nearest step and the realized times are reported.
    """
    dim = grid.dim
    if flow.dim != dim:
        raise DimensionError("grid and flow dimensions differ")
    p = np.asarray(p, dtype=float).ravel()
    if p.size != dim:
        raise DimensionError(f"p must have {dim} components")
    if not (t_end > 0 and step_scale > 0):
        raise ConfigurationError("t_end and step_scale must be positive")
    M = int(directions or (32 if dim == 2 else 48))
    if M < 8:
        raise ConfigurationError("need at least 8 directions")
    if 8.0 * M * grid.size * dim > max_bytes:
        raise ResourceError(f"flow maps need {8.0 * M * grid.size * dim:.3g} bytes (> {max_bytes:.3g})")
    dt0 = control_step_size(flow, step_scale)
    steps = max(int(min_steps), 1, int(math.ceil(t_end / dt0 - 1e-9)))
    dt = t_end / steps
    speed = 1.0 + flow.A * max_speed(flow)
    sub = max(1, int(math.ceil(speed * dt / 0.1)))
    if dim == 2:
        th = 2 * np.pi * np.arange(M) / M
        dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
    else:
        dirs = sphere_directions(M)
    pts = grid.points().reshape(-1, dim)
    D = np.ascontiguousarray(_flow_displacements(flow, pts, dirs, dt, sub).reshape((M,) + grid.shape + (dim,)))
    v = np.zeros(grid.shape) if v0 is None else np.array(
        v0.values if isinstance(v0, ScalarField) else v0, dtype=float)
    if v.shape != grid.shape:
        raise DimensionError("initial field does not match the grid")
    marks = {max(1, min(steps, int(round(c / dt)))) for c in checkpoints if 0 < c < t_end} | {steps}
    times, fields = [0.0], [ScalarField(grid, v.copy())]
    mt, mv = [0.0], [float(v.mean())]
    out = np.empty_like(v)
    sp = grid.spacing
    for k in range(1, steps + 1):
        if dim == 2:
            _control_step2d(v, D, p[0], p[1], sp[0], sp[1], out)
        else:
            _control_step3d(v, D, p, sp[0], sp[1], sp[2], out)
        v, out = out, v
        mt.append(k * dt)
        mv.append(float(v.mean()))
        if k in marks:
            times.append(k * dt)
            fields.append(ScalarField(grid, v.copy()))
    return ControlEvolution(np.asarray(times), fields, np.asarray(mt), np.asarray(mv), dt, steps, M, p)


def control_hbar(flow: FlowSpec, p: ArrayLike, grid: PeriodicGrid, t_end: float = 4.0,
                 rel_tol: float = 5e-3, osc_tol: float = 5e-2, **kwargs):
    """Inviscid H̄(p) as the large-time mean speed of the control-formula solver.

    Same windows and convergence rule as the flux-based large-time
    estimator: speeds over ``[T/2, 3T/4]`` and ``[3T/4, T]`` must agree within
    ``rel_tol`` and the per-cell spread over the last window must stay below
    ``osc_tol * H̄``.
    """
    from .homog.estimates import EffectiveHEstimate

    T = float(t_end)
    kwargs.setdefault("min_steps", 8)
    res = control_evolve(flow, p, grid, T, checkpoints=(T / 2, 3 * T / 4), **kwargs)
    (t1, f1), (t2, f2), (t3, f3) = [(res.times[i], res.fields[i]) for i in (-3, -2, -1)]
    a, b, c = f1.values, f2.values, f3.values
    value = -(c.mean() - a.mean()) / (t3 - t1)
    w1 = -(b.mean() - a.mean()) / (t2 - t1)
    w2 = -(c.mean() - b.mean()) / (t3 - t2)
    cell_last = -(c - b) / (t3 - t2)
    cell_all = -(c - a) / (t3 - t1)
    spread = float(np.ptp(cell_last))
    scale = max(abs(value), 1e-12)
    converged = abs(w1 - w2) <= rel_tol * scale and spread <= osc_tol * scale
    hist = {"times": res.mean_times, "means": res.mean_values, "windows": [float(w1), float(w2)],
            "spread_last_window": spread, "steps": res.steps, "dt": res.dt, "directions": res.directions,
            "final_field": res.final}
    return EffectiveHEstimate(np.asarray(p, dtype=float), float(value), float(cell_all.min()),
                              float(cell_all.max()), "control", hist, bool(converged))


# ---------------------------------------------------------------- arrival times

@dataclass(frozen=True, eq=False)
class ArrivalTimeField(ScalarField):
    """First-crossing times; ``+inf`` marks cells not reached within ``t_max``."""

    allow_inf = True
    t_max: float = math.inf


def reach_time_field(flow: FlowSpec, source: ArrayLike, r0: float, grid: PeriodicGrid,
                     t_max: float | None = None, cfl: float = 0.5) -> ArrivalTimeField:
    """Minimum time to reach ``B(source, r0)`` along ``xi' = -V(xi) + a``, ``|a| <= 1``.

    The inviscid G-equation is advanced from the periodic signed distance to
    the ball; a cell's arrival time is the instant its value crosses zero,
    interpolated linearly within the step.
    """
    if not r0 > 0:
        raise ConfigurationError("r0 must be positive")
    if grid.dim != flow.dim:
        raise DimensionError("grid and flow dimensions differ")
    t_max = float(t_max) if t_max is not None else float(np.linalg.norm(grid.period))
    spec = GEquationSpec("inviscid", flow=flow)
    disc = Discretization(spec, grid, np.zeros(grid.dim))
    v = periodic_distance(grid, source) - r0
    arrival = np.where(v <= 0, 0.0, np.inf)
    t = 0.0
    while t < t_max and np.isinf(arrival).any():
        F, rate = disc.flux(v)
        dt = min(cfl / rate, t_max - t)
        v_new = v - dt * F
        hit = np.isinf(arrival) & (v_new <= 0)
        frac = np.clip(v[hit] / np.maximum(v[hit] - v_new[hit], 1e-300), 0.0, 1.0)
        arrival[hit] = t + dt * frac
        v = v_new
        t += dt
    return ArrivalTimeField(grid, arrival, t_max)
