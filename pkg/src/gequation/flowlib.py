"""Catalog of periodic incompressible velocity fields on the 2π torus.

Every flow is evaluated as ``A * V(x / scale)`` where ``A`` is the intensity
and ``scale`` an optional microscopic length (``scale = eps`` gives the
oscillating field used in homogenization-rate experiments).  Points are
arrays of shape ``(..., dim)``; outputs broadcast the same way.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import CubicSpline, RectBivariateSpline
from scipy.optimize import minimize

from .errors import ConfigurationError, DimensionError

TWO_PI = 2.0 * math.pi

# analytic one-variable profiles: name -> (f, f')
_PROFILES_1D: dict[str, tuple[Callable, Callable]] = {
    "sin": (np.sin, np.cos),
    "cos": (np.cos, lambda x: -np.sin(x)),
    "sin2": (lambda x: np.sin(2.0 * x), lambda x: 2.0 * np.cos(2.0 * x)),
    "const": (lambda x: np.zeros_like(x), lambda x: np.zeros_like(x)),
}


def _cosavg(x1, x2):
    return 0.5 * (np.cos(x1) + np.cos(x2)) - 1.0


def _cosavg_grad(x1, x2):
    return -0.5 * np.sin(x1), -0.5 * np.sin(x2)


# analytic two-variable profiles: name -> (f, grad f)
_PROFILES_2D: dict[str, tuple[Callable, Callable]] = {
    "cosavg": (_cosavg, _cosavg_grad),
}


@dataclass(frozen=True)
class Profile1D:
    """Periodic scalar of one variable with period 2π.

    Either a named analytic profile or uniform samples over ``[0, 2π)``
    interpolated by a periodic cubic spline.
    """

    name: str = "sin"
    samples: tuple[float, ...] | None = None
    amplitude: float = 1.0

    def __post_init__(self):
        if self.samples is None:
            if self.name not in _PROFILES_1D:
                raise ConfigurationError(f"unknown profile '{self.name}'")
        else:
            s = np.asarray(self.samples, dtype=float)
            if s.ndim != 1 or s.size < 4 or not np.all(np.isfinite(s)):
                raise ConfigurationError("profile samples must be >= 4 finite values")

    @classmethod
    def from_csv(cls, path: str | Path) -> "Profile1D":
        try:
            with open(path, newline="") as fh:
                vals = [float(row[0]) for row in csv.reader(fh) if row and not row[0].startswith("#")]
        except (OSError, ValueError, IndexError) as exc:
            raise ConfigurationError(f"cannot read profile samples from {path}: {exc}") from exc
        return cls(name=str(path), samples=tuple(vals))

    @cached_property
    def _spline(self) -> CubicSpline:
        s = np.asarray(self.samples, dtype=float)
        xs = np.linspace(0.0, TWO_PI, s.size + 1)
        return CubicSpline(xs, np.append(s, s[0]), bc_type="periodic")

    def __call__(self, x: ArrayLike) -> NDArray:
        x = np.asarray(x, dtype=float)
        if self.samples is None:
            return self.amplitude * _PROFILES_1D[self.name][0](x)
        return self.amplitude * self._spline(np.mod(x, TWO_PI))

    def derivative(self, x: ArrayLike) -> NDArray:
        x = np.asarray(x, dtype=float)
        if self.samples is None:
            return self.amplitude * _PROFILES_1D[self.name][1](x)
        return self.amplitude * self._spline(np.mod(x, TWO_PI), 1)

    def second_derivative(self, x: ArrayLike, h: float = 1e-4) -> NDArray:
        return (self.derivative(np.asarray(x) + h) - self.derivative(np.asarray(x) - h)) / (2 * h)


@dataclass(frozen=True)
class Profile2D:
    """Periodic scalar of two variables (used by the 3D shear flow)."""

    name: str = "cosavg"
    func: Callable | None = field(default=None, compare=False)
    grad: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.func is None and self.name not in _PROFILES_2D:
            raise ConfigurationError(f"unknown 2D profile '{self.name}'")

    def __call__(self, x1, x2) -> NDArray:
        f = self.func if self.func is not None else _PROFILES_2D[self.name][0]
        return f(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))

    def gradient(self, x1, x2, h: float = 1e-6) -> tuple[NDArray, NDArray]:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if self.func is None:
            return _PROFILES_2D[self.name][1](x1, x2)
        if self.grad is not None:
            return self.grad(x1, x2)
        return ((self(x1 + h, x2) - self(x1 - h, x2)) / (2 * h),
                (self(x1, x2 + h) - self(x1, x2 - h)) / (2 * h))


@dataclass(frozen=True)
class StreamSamples:
    """Stream function samples on the nodes ``i * 2π / n`` of an n×n grid."""

    values: tuple[tuple[float, ...], ...]
    source: str = ""

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 8:
            raise ConfigurationError("stream samples must form a square grid with n >= 8")
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("stream samples contain non-finite values")

    @classmethod
    def from_array(cls, arr: ArrayLike, source: str = "") -> "StreamSamples":
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 1:
            n = int(round(math.sqrt(arr.size)))
            if n * n != arr.size:
                raise ConfigurationError("flat stream samples must have a square count")
            arr = arr.reshape((n, n), order="F")
        return cls(tuple(map(tuple, arr)), source)

    @classmethod
    def from_csv(cls, path: str | Path) -> "StreamSamples":
        try:
            arr = np.loadtxt(path, delimiter=",", ndmin=1)
        except (OSError, ValueError) as exc:
            raise ConfigurationError(f"cannot read stream samples from {path}: {exc}") from exc
        return cls.from_array(arr.ravel(order="F") if arr.ndim == 2 and arr.shape[1] == 1 else arr, str(path))

    @cached_property
    def _spline(self) -> RectBivariateSpline:
        arr = np.asarray(self.values, dtype=float)
        n = arr.shape[0]
        pad = 4
        padded = np.pad(arr, pad, mode="wrap")
        xs = (np.arange(-pad, n + pad)) * (TWO_PI / n)
        return RectBivariateSpline(xs, xs, padded, kx=3, ky=3, s=0)

    def ev(self, x1, x2, dx: int = 0, dy: int = 0) -> NDArray:
        x1 = np.mod(np.asarray(x1, dtype=float), TWO_PI)
        x2 = np.mod(np.asarray(x2, dtype=float), TWO_PI)
        shape = np.broadcast(x1, x2).shape
        out = self._spline.ev(np.broadcast_to(x1, shape).ravel(), np.broadcast_to(x2, shape).ravel(), dx=dx, dy=dy)
        return out.reshape(shape)


_KINDS = ("zero", "shear2d", "shear3d", "cellular", "abc", "kolmogorov", "stream2d")


@dataclass(frozen=True)
class FlowSpec:
    """Immutable description of a periodic velocity field.

    Parameters
    ----------
    kind : one of ``zero, shear2d, shear3d, cellular, abc, kolmogorov, stream2d``
    A : intensity multiplier.
    coeffs : ABC coefficients ``(a, b, c)``.
    profile : shear profile (``Profile1D`` for shear2d, ``Profile2D`` for shear3d).
    stream : stream-function samples for ``stream2d``.
    zero_dim : dimension of the zero flow.
    scale : microscopic length; the field is ``A V(x / scale)``.
    """

    kind: str
    A: float = 1.0
    coeffs: tuple[float, float, float] = (1.0, 1.0, 1.0)
    profile: Profile1D | Profile2D | None = None
    stream: StreamSamples | None = None
    zero_dim: int = 2
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown flow kind '{self.kind}'")
        if not (math.isfinite(self.A) and self.A >= 0):
            raise ConfigurationError("flow intensity A must be finite and >= 0")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ConfigurationError("flow scale must be positive")
        if self.kind == "abc" and not all(math.isfinite(c) for c in self.coeffs):
            raise ConfigurationError("ABC coefficients must be finite")
        if self.kind == "shear2d" and not isinstance(self.profile, Profile1D):
            object.__setattr__(self, "profile", Profile1D("sin"))
        if self.kind == "shear3d" and not isinstance(self.profile, Profile2D):
            object.__setattr__(self, "profile", Profile2D("cosavg"))
        if self.kind == "stream2d" and self.stream is None:
            raise ConfigurationError("stream2d flow requires stream samples")
        if self.kind == "zero" and self.zero_dim not in (2, 3):
            raise ConfigurationError("zero flow dimension must be 2 or 3")

    @property
    def dim(self) -> int:
        if self.kind in ("cellular", "shear2d", "stream2d"):
            return 2
        if self.kind in ("abc", "kolmogorov", "shear3d"):
            return 3
        return self.zero_dim

    @property
    def period(self) -> float:
        return TWO_PI

    def with_intensity(self, A: float) -> "FlowSpec":
        return replace(self, A=float(A))

    def scaled(self, scale: float) -> "FlowSpec":
        return replace(self, scale=float(scale))

    @property
    def mean_zero(self) -> bool:
        """True for kinds whose velocity has zero mean by construction."""
        return self.kind in ("zero", "cellular", "abc", "kolmogorov", "stream2d")

    def flow_id(self) -> str:
        if self.kind == "abc":
            return "abc:" + ",".join(repr(float(c)) for c in self.coeffs)
        if self.kind == "shear2d":
            return f"shear2d:{self.profile.name}"
        if self.kind == "shear3d":
            return f"shear3d:{self.profile.name}"
        if self.kind == "stream2d":
            return f"stream2d:{self.stream.source}"
        if self.kind == "zero" and self.zero_dim == 3:
            return "zero:3"
        return self.kind


def flow_from_id(flow_id: str, A: float = 1.0) -> FlowSpec:
    """Parse a catalog string id such as ``"abc:1,1,1"`` or ``"shear2d:sin"``."""
    kind, _, arg = flow_id.strip().partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "zero":
            return FlowSpec("zero", A=A, zero_dim=int(arg) if arg else 2)
        if kind == "cellular":
            return FlowSpec("cellular", A=A)
        if kind == "kolmogorov":
            return FlowSpec("kolmogorov", A=A)
        if kind == "abc":
            coeffs = tuple(float(c) for c in arg.split(",")) if arg else (1.0, 1.0, 1.0)
            if len(coeffs) != 3:
                raise ConfigurationError("abc needs three coefficients a,b,c")
            return FlowSpec("abc", A=A, coeffs=coeffs)
        if kind == "shear2d":
            name = arg or "sin"
            prof = Profile1D(name) if name in _PROFILES_1D else Profile1D.from_csv(name)
            return FlowSpec("shear2d", A=A, profile=prof)
        if kind == "shear3d":
            return FlowSpec("shear3d", A=A, profile=Profile2D(arg or "cosavg"))
        if kind == "stream2d":
            if not arg:
                raise ConfigurationError("stream2d needs a csv path")
            return FlowSpec("stream2d", A=A, stream=StreamSamples.from_csv(arg))
    except ValueError as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"malformed flow id '{flow_id}': {exc}") from exc
    raise ConfigurationError(f"unknown flow id '{flow_id}'")


def _as_points(flow: FlowSpec, x: ArrayLike) -> NDArray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != flow.dim:
        raise DimensionError(f"points must have last axis {flow.dim}, got {x.shape}")
    return x / flow.scale


def eval_velocity(flow: FlowSpec, x: ArrayLike) -> NDArray:
    """Velocity ``A V(x)`` at points ``x`` of shape ``(..., dim)``."""
    y = _as_points(flow, x)
    out = np.zeros_like(y)
    k = flow.kind
    if k == "cellular":
        s1, c1 = np.sin(y[..., 0]), np.cos(y[..., 0])
        s2, c2 = np.sin(y[..., 1]), np.cos(y[..., 1])
        out[..., 0] = -s1 * c2
        out[..., 1] = c1 * s2
    elif k == "shear2d":
        out[..., 1] = flow.profile(y[..., 0])
    elif k == "shear3d":
        out[..., 2] = flow.profile(y[..., 0], y[..., 1])
    elif k == "abc":
        a, b, c = flow.coeffs
        out[..., 0] = a * np.sin(y[..., 2]) + c * np.cos(y[..., 1])
        out[..., 1] = b * np.sin(y[..., 0]) + a * np.cos(y[..., 2])
        out[..., 2] = c * np.sin(y[..., 1]) + b * np.cos(y[..., 0])
    elif k == "kolmogorov":
        out[..., 0] = np.sin(y[..., 2])
        out[..., 1] = np.sin(y[..., 0])
        out[..., 2] = np.sin(y[..., 1])
    elif k == "stream2d":
        out[..., 0] = -flow.stream.ev(y[..., 0], y[..., 1], dy=1)
        out[..., 1] = flow.stream.ev(y[..., 0], y[..., 1], dx=1)
    return flow.A * out


def eval_jacobian(flow: FlowSpec, x: ArrayLike) -> NDArray:
    """Jacobian ``J[..., i, j] = d V_i / d x_j`` including intensity and scale."""
    y = _as_points(flow, x)
    d = flow.dim
    J = np.zeros(y.shape + (d,))
    k = flow.kind
    if k == "cellular":
        s1, c1 = np.sin(y[..., 0]), np.cos(y[..., 0])
        s2, c2 = np.sin(y[..., 1]), np.cos(y[..., 1])
        J[..., 0, 0] = -c1 * c2
        J[..., 0, 1] = s1 * s2
        J[..., 1, 0] = -s1 * s2
        J[..., 1, 1] = c1 * c2
    elif k == "shear2d":
        J[..., 1, 0] = flow.profile.derivative(y[..., 0])
    elif k == "shear3d":
        g1, g2 = flow.profile.gradient(y[..., 0], y[..., 1])
        J[..., 2, 0] = g1
        J[..., 2, 1] = g2
    elif k == "abc":
        a, b, c = flow.coeffs
        J[..., 0, 1] = -c * np.sin(y[..., 1])
        J[..., 0, 2] = a * np.cos(y[..., 2])
        J[..., 1, 0] = b * np.cos(y[..., 0])
        J[..., 1, 2] = -a * np.sin(y[..., 2])
        J[..., 2, 0] = -b * np.sin(y[..., 0])
        J[..., 2, 1] = c * np.cos(y[..., 1])
    elif k == "kolmogorov":
        J[..., 0, 2] = np.cos(y[..., 2])
        J[..., 1, 0] = np.cos(y[..., 0])
        J[..., 2, 1] = np.cos(y[..., 1])
    elif k == "stream2d":
        st = flow.stream
        J[..., 0, 0] = -st.ev(y[..., 0], y[..., 1], dx=1, dy=1)
        J[..., 0, 1] = -st.ev(y[..., 0], y[..., 1], dy=2)
        J[..., 1, 0] = st.ev(y[..., 0], y[..., 1], dx=2)
        J[..., 1, 1] = st.ev(y[..., 0], y[..., 1], dx=1, dy=1)
    return (flow.A / flow.scale) * J


def eval_strain(flow: FlowSpec, x: ArrayLike) -> NDArray:
    """Strain-rate tensor ``(DV + DV^T) / 2`` at points ``x``."""
    J = eval_jacobian(flow, x)
    return 0.5 * (J + np.swapaxes(J, -1, -2))


def divergence(flow: FlowSpec, x: ArrayLike) -> NDArray:
    return np.trace(eval_jacobian(flow, x), axis1=-2, axis2=-1)


def eval_curl(flow: FlowSpec, x: ArrayLike) -> NDArray:
    if flow.dim != 3:
        raise DimensionError("curl is defined for 3D flows only")
    J = eval_jacobian(flow, x)
    return np.stack([J[..., 2, 1] - J[..., 1, 2],
                     J[..., 0, 2] - J[..., 2, 0],
                     J[..., 1, 0] - J[..., 0, 1]], axis=-1)


def sample_points(dim: int, m: int, period: float = TWO_PI) -> NDArray:
    """Uniform node lattice ``i * period / m`` as an array of shape (m**dim, dim)."""
    axes = [np.arange(m) * (period / m)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def beltrami_residual(flow: FlowSpec, m: int = 32) -> float:
    """Max over a sample lattice of ``|curl V - V|``."""
    if flow.dim != 3:
        raise DimensionError("Beltrami residual needs a 3D flow")
    pts = sample_points(3, m) * flow.scale
    r = eval_curl(flow, pts) * flow.scale - eval_velocity(flow, pts)
    return float(np.max(np.linalg.norm(r, axis=-1)))


def _refined_max(func: Callable[[NDArray], NDArray], dim: int, m: int, starts: int = 8) -> float:
    pts = sample_points(dim, m)
    vals = func(pts)
    best = float(np.max(vals))
    order = np.argsort(-vals, kind="stable")[:starts]
    for idx in order:
        res = minimize(lambda z: -float(func(z[None, :])[0]), pts[idx], method="BFGS",
                       options={"gtol": 1e-12, "xrtol": 1e-10})
        best = max(best, -float(res.fun))
    return best


def max_speed(flow: FlowSpec, p: ArrayLike | None = None):
    """``sup |V|`` at intensity 1; with ``p`` also returns ``sup |V . p|``."""
    unit = replace(flow, A=1.0, scale=1.0)
    if unit.kind == "zero":
        speed = 0.0
    else:
        m = 96 if unit.dim == 2 else 40
        speed = math.sqrt(max(_refined_max(lambda z: np.sum(eval_velocity(unit, z) ** 2, axis=-1), unit.dim, m), 0.0))
    if p is None:
        return speed
    return speed, max_projected_speed(flow, p)


def max_projected_speed(flow: FlowSpec, p: ArrayLike) -> float:
    """``sup |V . p|`` at intensity 1."""
    unit = replace(flow, A=1.0, scale=1.0)
    p = np.asarray(p, dtype=float)
    if unit.kind == "zero" or not np.any(p):
        return 0.0
    m = 96 if unit.dim == 2 else 40
    return _refined_max(lambda z: np.abs(eval_velocity(unit, z) @ p), unit.dim, m)


def mean_velocity(flow: FlowSpec, m: int = 64) -> NDArray:
    """Average of the velocity over one period cell (midpoint lattice)."""
    pts = (sample_points(flow.dim, m) + 0.5 * TWO_PI / m) * flow.scale
    return eval_velocity(flow, pts).mean(axis=0)
