"""Loss of homogenization for the curvature G-equation in 3D shear flows.

The flow ``(0, 0, A f(x'))`` reduces the problem to the plane with a frozen
third slope.  Without the laminar cutoff the cell problem always has a
constant ``Hnc(p, A)``; with the cutoff the large-time limit stays uniform
in ``x'`` only while ``Hnc(p, A) >= A max(p_3 f)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import brentq

from ..errors import BracketingError, ConfigurationError
from ..flowlib import FlowSpec, Profile2D
from ..grid import PeriodicGrid
from ..hjsolver import GEquationSpec, SolverConfig, evolve
from .estimates import hbar_large_time


@dataclass
class BifurcationResult:
    p: NDArray
    d: float
    A_grid: NDArray
    hbar_nocut: NDArray
    hbar_cut: NDArray
    spread_T: NDArray
    spread_2T: NDArray
    detected: NDArray
    A0_detected: float | None
    A0_characterized: float
    residual_at_root: float
    F: float
    history: dict = field(default_factory=dict)

    @property
    def agreement(self) -> float:
        """``|A0_detected - A0_characterized|`` (infinite when nothing was detected)."""
        return math.inf if self.A0_detected is None else abs(self.A0_detected - self.A0_characterized)

    @property
    def grid_step(self) -> float:
        return float(np.min(np.diff(self.A_grid))) if self.A_grid.size > 1 else math.inf

    @property
    def decreasing(self) -> bool:
        """``Hnc - F A`` strictly decreasing along the grid."""
        return bool(np.all(np.diff(self.hbar_nocut - self.F * self.A_grid) < 0))

    def below_threshold_gap(self) -> float:
        """Largest relative gap between cutoff and no-cutoff H̄ for grid points below A0."""
        mask = self.A_grid < self.A0_characterized
        if not mask.any():
            return 0.0
        nc = self.hbar_nocut[mask]
        return float(np.max(np.abs(self.hbar_cut[mask] - nc) / np.maximum(np.abs(nc), 1e-12)))

    def rows(self) -> list[dict]:
        return [{"A": float(a), "hbar_nocut": float(h0), "hbar_cut": float(h1), "spread_T": float(s1),
                 "spread_2T": float(s2), "detected": bool(dt)}
                for a, h0, h1, s1, s2, dt in zip(self.A_grid, self.hbar_nocut, self.hbar_cut, self.spread_T,
                                                 self.spread_2T, self.detected)]

    def to_dict(self) -> dict:
        return {"p": self.p.tolist(), "d": self.d, "F": self.F, "A0_detected": self.A0_detected,
                "A0_characterized": self.A0_characterized, "agreement": self.agreement,
                "residual_at_root": self.residual_at_root, "decreasing": self.decreasing,
                "below_threshold_gap": self.below_threshold_gap(), "rows": self.rows()}


def _scaled_max(profile: Profile2D, scale: float, m: int = 512) -> float:
    """``max(scale * f)`` on a fine lattice that contains the integer-multiple-of-2pi points."""
    x = np.arange(m) * (2 * math.pi / m)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    return float(np.max(scale * np.asarray(profile(X1, X2))))


def bifurcation_scan(profile: Profile2D | None = None, p: ArrayLike = (0.0, 0.0, 1.0), d: float = 0.2,
                     A_grid: Sequence[float] = tuple(np.arange(0.0, 16.01, 0.25)), n: int = 64,
                     t_end: float = 20.0, threshold: float = 0.1,
                     root_tol: float = 1e-4, cfl: float = 0.5) -> BifurcationResult:
    """Scan ``A`` for the onset of x-dependent large-time limits.

    Both problems run to ``2T`` and H̄ is the mean speed over ``[T, 2T]``.
    The spread at horizon ``t`` is the oscillation of the per-cell speed over
    ``[t/2, t]`` (``spread_T`` for ``t = T``, ``spread_2T`` for ``t = 2T``);
    a bounded corrector drops out of it, so it vanishes when the limit is
    uniform.  Detection needs both spreads above ``threshold * |Hnc - F A|``.
    ``osc(-v(., T)/T)`` is kept in ``history["raw_spread"]``.
    ``A0_characterized`` is the root of ``Hnc(p, A) - F A`` refined by Brent's
    method.
    """
    profile = profile or Profile2D("cosavg")
    p = np.asarray(p, dtype=float).ravel()
    if p.size != 3 or p[2] == 0:
        raise ConfigurationError("p must have three components with p_3 != 0")
    if not d > 0:
        raise ConfigurationError("d must be positive")
    A_grid = np.asarray(sorted(float(a) for a in A_grid))
    if A_grid.size < 2 or np.any(A_grid < 0):
        raise ConfigurationError("A_grid needs at least two nonnegative values")
    F = _scaled_max(profile, p[2])
    grid = PeriodicGrid(2, n)
    T = float(t_end)
    # translate so the lattice maxima sit on cell centers; otherwise the pinned
    # speed at the maximum is never sampled
    half = 0.5 * grid.h
    shifted = Profile2D(f"{profile.name}@center", func=lambda x1, x2: profile(x1 - half, x2 - half))
    base = FlowSpec("shear3d", profile=shifted)

    def run(A: float, cutoff: bool):
        spec = GEquationSpec("curvature", d=d, cutoff=cutoff, flow=base.with_intensity(A))
        cfg = SolverConfig(cfl=cfl, t_end=2 * T, checkpoints=(T / 2, T), time_integrator="euler")
        res = evolve(spec, p, cfg, grid)
        return res.field_at(T / 2).values, res.field_at(T).values, res.final.values

    def nocut(A: float) -> float:
        _, vT, v2T = run(A, False)
        return float(-(v2T.mean() - vT.mean()) / T)

    hnc, hcut, raw, w1, w2, det = [], [], [], [], [], []
    for A in A_grid:
        hnc.append(nocut(A))
        vh, vT, v2T = run(A, True)
        raw.append(float(np.ptp(-vT / T)))
        w1.append(float(np.ptp(-(vT - vh) / (T / 2))))
        w2.append(float(np.ptp(-(v2T - vT) / T)))
        hcut.append(float(-(v2T.mean() - vT.mean()) / T))
        thr = threshold * abs(hnc[-1] - F * A)
        det.append(bool(w1[-1] > thr and w2[-1] > thr))
    hnc_a = np.array(hnc)
    g = hnc_a - F * A_grid
    sign_change = np.nonzero((g[:-1] > 0) & (g[1:] <= 0))[0]
    if sign_change.size == 0:
        raise BracketingError(f"Hnc - F A does not change sign on [{A_grid[0]}, {A_grid[-1]}]")
    k = int(sign_change[0])
    if g[k + 1] == 0:
        A0 = float(A_grid[k + 1])
    else:
        A0 = float(brentq(lambda a: nocut(a) - F * a, A_grid[k], A_grid[k + 1], xtol=root_tol))
    resid = float(nocut(A0) - F * A0)
    det_a = np.array(det)
    A0_det = float(A_grid[np.argmax(det_a)]) if det_a.any() else None
    return BifurcationResult(p, float(d), A_grid, hnc_a, np.array(hcut), np.array(w1), np.array(w2), det_a,
                             A0_det, A0, resid, F, {"t_end": T, "n": n, "threshold": threshold,
                                                    "raw_spread": raw})
