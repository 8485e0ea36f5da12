"""Periodic cell-centered Cartesian grids and the stencils the solvers share."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import ClassVar, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigurationError, DimensionError

TWO_PI = 2.0 * math.pi
_MAGIC = "gequation-field"


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic grid with ``n`` cells per axis and cell centers at ``(i + 1/2) h``.

    ``n`` and ``period`` may be given per axis; ``h`` is derived, never stored.
    """

    dim: int
    n: int | tuple[int, ...]
    period: float | tuple[float, ...] = TWO_PI

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigurationError("grid dimension must be 2 or 3")
        n = (self.n,) * self.dim if np.isscalar(self.n) else tuple(self.n)
        per = (self.period,) * self.dim if np.isscalar(self.period) else tuple(self.period)
        if len(n) != self.dim or len(per) != self.dim:
            raise ConfigurationError("per-axis n/period must have dim entries")
        if any(int(k) != k or k < 8 for k in n):
            raise ConfigurationError("grid needs n >= 8 cells per axis")
        if any(not (math.isfinite(L) and L > 0) for L in per):
            raise ConfigurationError("grid period must be positive")
        object.__setattr__(self, "n", tuple(int(k) for k in n))
        object.__setattr__(self, "period", tuple(float(L) for L in per))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / k for L, k in zip(self.period, self.n))

    @property
    def h(self) -> float:
        """Smallest spacing (the spacing itself on isotropic grids)."""
        return min(self.spacing)

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    def axis(self, i: int) -> NDArray:
        return (np.arange(self.n[i]) + 0.5) * self.spacing[i]

    def mesh(self) -> list[NDArray]:
        return np.meshgrid(*[self.axis(i) for i in range(self.dim)], indexing="ij")

    def points(self) -> NDArray:
        """Cell centers as an array of shape ``(*shape, dim)``."""
        return np.stack(self.mesh(), axis=-1)

    def zeros(self) -> "ScalarField":
        return ScalarField(self, np.zeros(self.shape))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "n": list(self.n), "period": list(self.period)}

    @classmethod
    def from_dict(cls, d: dict) -> "PeriodicGrid":
        return cls(int(d["dim"]), tuple(d["n"]), tuple(d["period"]))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One value per cell center of ``grid``; array axis ``k`` is coordinate ``x_{k+1}``."""

    grid: PeriodicGrid
    values: NDArray
    allow_inf: ClassVar[bool] = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise DimensionError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        ok = np.all(np.isfinite(vals) | (vals == np.inf)) if self.allow_inf else np.all(np.isfinite(vals))
        if not ok:
            raise ConfigurationError("field values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: PeriodicGrid, func) -> "ScalarField":
        return cls(grid, np.asarray(func(grid.points()), dtype=float))

    def __add__(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, self.values + c)

    def mean(self) -> float:
        return mean(self)

    def osc(self) -> float:
        return osc(self)


# ---------------------------------------------------------------------------
# array-level stencils (periodic wrap by index arithmetic)

def _fwd(a: NDArray, axis: int) -> NDArray:
    return np.roll(a, -1, axis=axis)


def _bwd(a: NDArray, axis: int) -> NDArray:
    return np.roll(a, 1, axis=axis)


def one_sided_arrays(a: NDArray, spacing: Sequence[float]) -> list[tuple[NDArray, NDArray]]:
    out = []
    for i, h in enumerate(spacing):
        out.append(((a - _bwd(a, i)) / h, (_fwd(a, i) - a) / h))
    return out


def central_arrays(a: NDArray, spacing: Sequence[float]) -> list[NDArray]:
    return [(_fwd(a, i) - _bwd(a, i)) / (2 * h) for i, h in enumerate(spacing)]


def laplacian_array(a: NDArray, spacing: Sequence[float]) -> NDArray:
    out = np.zeros_like(a)
    for i, h in enumerate(spacing):
        out += (_fwd(a, i) - 2 * a + _bwd(a, i)) / (h * h)
    return out


def hessian_arrays(a: NDArray, spacing: Sequence[float]) -> list[list[NDArray]]:
    dim = len(spacing)
    H = [[None] * dim for _ in range(dim)]
    for i, hi in enumerate(spacing):
        H[i][i] = (_fwd(a, i) - 2 * a + _bwd(a, i)) / (hi * hi)
        for j in range(i + 1, dim):
            hj = spacing[j]
            ap = _fwd(a, i)
            am = _bwd(a, i)
            H[i][j] = (_fwd(ap, j) - _bwd(ap, j) - _fwd(am, j) + _bwd(am, j)) / (4 * hi * hj)
            H[j][i] = H[i][j]
    return H


def default_eps(p: ArrayLike) -> float:
    """Curvature regularization ``1e-6 * max(1, |p|)``."""
    return 1e-6 * max(1.0, float(np.linalg.norm(np.asarray(p, dtype=float))))


def curvature_array(a: NDArray, spacing: Sequence[float], p: ArrayLike, eps: float) -> NDArray:
    """Central-difference ``div(q / |q|_eps)`` with ``q = p + Dv``.

    ``p`` may carry one extra trailing component (a frozen slope along an
    extruded direction); it enters ``|q|`` but has no derivative.
    """
    p = np.asarray(p, dtype=float)
    dim = len(spacing)
    g = central_arrays(a, spacing)
    q = [p[i] + g[i] for i in range(dim)]
    qq = sum(qi * qi for qi in q) + float(np.sum(p[dim:] ** 2))
    norm = np.sqrt(qq + eps * eps)
    H = hessian_arrays(a, spacing)
    lap = sum(H[i][i] for i in range(dim))
    quad = sum(q[i] * q[j] * H[i][j] for i in range(dim) for j in range(dim))
    return lap / norm - quad / norm**3


# ---------------------------------------------------------------------------
# field-level operations

def one_sided_gradients(f: ScalarField) -> list[tuple[ScalarField, ScalarField]]:
    """Per axis the pair ``(D-, D+)`` of backward/forward differences."""
    return [(ScalarField(f.grid, dm), ScalarField(f.grid, dp))
            for dm, dp in one_sided_arrays(f.values, f.grid.spacing)]


def central_gradient(f: ScalarField) -> list[ScalarField]:
    return [ScalarField(f.grid, g) for g in central_arrays(f.values, f.grid.spacing)]


def laplacian(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, laplacian_array(f.values, f.grid.spacing))


def mean_curvature(f: ScalarField, p: ArrayLike, eps: float | None = None) -> ScalarField:
    """Regularized mean curvature of the level sets of ``p.x + f``."""
    if eps is None:
        eps = default_eps(p)
    if eps <= 0:
        raise ConfigurationError("eps must be positive")
    p = np.asarray(p, dtype=float)
    if p.size < f.grid.dim:
        raise DimensionError("p has fewer components than the grid dimension")
    return ScalarField(f.grid, curvature_array(f.values, f.grid.spacing, p, eps))


def interpolation_weights(grid: PeriodicGrid, x: NDArray):
    """Corner indices and multilinear weights for points ``x`` of shape (m, dim)."""
    x = np.asarray(x, dtype=float)
    idx, wts = [], []
    for i in range(grid.dim):
        s = x[..., i] / grid.spacing[i] - 0.5
        fl = np.floor(s)
        t = s - fl
        i0 = np.mod(fl.astype(np.int64), grid.n[i])
        idx.append((i0, np.where(i0 + 1 == grid.n[i], 0, i0 + 1)))
        wts.append((1.0 - t, t))
    return idx, wts


def interpolate_array(a: NDArray, grid: PeriodicGrid, x: ArrayLike) -> NDArray:
    """Periodic multilinear interpolation of cell values ``a`` at points ``x`` (..., dim)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != grid.dim:
        raise DimensionError("query points have the wrong dimension")
    idx, wts = interpolation_weights(grid, x)
    out = np.zeros(x.shape[:-1])
    for corner in range(2 ** grid.dim):
        bits = [(corner >> i) & 1 for i in range(grid.dim)]
        w = wts[0][bits[0]]
        for i in range(1, grid.dim):
            w = w * wts[i][bits[i]]
        out += w * a[tuple(idx[i][bits[i]] for i in range(grid.dim))]
    return out


def interpolate(f: ScalarField, x: ArrayLike) -> NDArray | float:
    """Multilinear periodic interpolation; scalar output for a single point."""
    x = np.asarray(x, dtype=float)
    out = interpolate_array(f.values, f.grid, x)
    return float(out) if x.ndim == 1 else out


def mean(f: ScalarField) -> float:
    return float(np.mean(f.values))


def osc(f: ScalarField | NDArray) -> float:
    a = f.values if isinstance(f, ScalarField) else np.asarray(f)
    return float(np.max(a) - np.min(a))


# ---------------------------------------------------------------------------
# serialization: values stored with the first coordinate varying fastest

def _header(grid: PeriodicGrid) -> dict:
    return {"format": _MAGIC, "version": 1, **grid.to_dict(), "dtype": "<f8", "order": "x-fastest"}


def save_csv(f: ScalarField, path: str | Path) -> None:
    g = f.grid
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(_header(g), sort_keys=True) + "\n")
        for v in f.values.ravel(order="F"):
            fh.write(repr(float(v)) + "\n")


def load_csv(path: str | Path) -> ScalarField:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ConfigurationError(f"{path}: missing field header")
        hdr = json.loads(first[2:])
        vals = np.array([float(line) for line in fh if line.strip()])
    grid = PeriodicGrid.from_dict(hdr)
    if vals.size != grid.size:
        raise ConfigurationError(f"{path}: expected {grid.size} values, found {vals.size}")
    return ScalarField(grid, vals.reshape(grid.shape, order="F"))


def save_binary(f: ScalarField, path: str | Path) -> None:
    """JSON header line followed by little-endian float64 payload."""
    with open(path, "wb") as fh:
        fh.write(json.dumps(_header(f.grid), sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(f.values.ravel(order="F"), dtype="<f8").tobytes())


def load_binary(path: str | Path) -> ScalarField:
    with open(path, "rb") as fh:
        hdr = json.loads(fh.readline().decode())
        if hdr.get("format") != _MAGIC:
            raise ConfigurationError(f"{path}: not a field file")
        payload = fh.read()
    grid = PeriodicGrid.from_dict(hdr)
    vals = np.frombuffer(payload, dtype=hdr.get("dtype", "<f8"))
    if vals.size != grid.size:
        raise ConfigurationError(f"{path}: payload size mismatch")
    return ScalarField(grid, vals.astype(float).reshape(grid.shape, order="F"))
