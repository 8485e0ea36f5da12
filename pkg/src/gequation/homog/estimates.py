"""Effective Hamiltonian estimators: large-time limit and vanishing discount."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..errors import ConfigurationError, NonConvergenceError
from ..flowlib import max_speed
from ..grid import PeriodicGrid, ScalarField
from ..hjsolver import Discretization, GEquationSpec, SolverConfig, evolve

METHODS = ("large_time", "discounted", "exact_shear", "strain_ode", "control")


@dataclass
class EffectiveHEstimate:
    """H̄(p) with its envelope and convergence diagnostics."""

    p: NDArray
    value: float
    lower: float
    upper: float
    method: str
    history: dict = field(default_factory=dict)
    converged: bool = True

    def to_dict(self) -> dict:
        hist = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.history.items()
                if not isinstance(v, (ScalarField, list)) or k in ("windows", "lambdas", "lambda_values",
                                                                   "lambda_osc", "lambda_max")}
        return {"p": np.asarray(self.p).tolist(), "value": self.value, "lower": self.lower,
                "upper": self.upper, "method": self.method, "converged": self.converged, "history": hist}


def hbar_large_time(spec: GEquationSpec, p: ArrayLike, config: SolverConfig, grid: PeriodicGrid,
                    rel_tol: float = 5e-3, osc_tol: float = 5e-2,
                    v0: ScalarField | None = None) -> EffectiveHEstimate:
    """Estimate H̄(p) as ``-(<v(T)> - <v(T/2)>)/(T/2)`` from planar initial data.

    Convergence requires the window speeds over ``[T/2, 3T/4]`` and
    ``[3T/4, T]`` to agree within ``rel_tol`` and the spatial oscillation of
    the per-cell speed over the last window to fall below ``osc_tol * value``.
    The envelope is the min/max over cells of the per-cell speed on ``[T/2, T]``.
    """
    T = config.t_end
    cfg = replace(config, checkpoints=tuple(sorted(set(config.checkpoints) | {T / 2, 3 * T / 4})))
    res = evolve(spec, p, cfg, grid, v0=v0)
    v_half = res.field_at(T / 2).values
    v_3q = res.field_at(3 * T / 4).values
    v_end = res.final.values
    value = -(v_end.mean() - v_half.mean()) / (T / 2)
    w1 = -(v_3q.mean() - v_half.mean()) / (T / 4)
    w2 = -(v_end.mean() - v_3q.mean()) / (T / 4)
    cell_last = -(v_end - v_3q) / (T / 4)
    cell_all = -(v_end - v_half) / (T / 2)
    spread_last = float(cell_last.max() - cell_last.min())
    scale = max(abs(value), 1e-12)
    converged = abs(w1 - w2) <= rel_tol * scale and spread_last <= osc_tol * scale
    hist = {"times": res.mean_times, "means": res.mean_values, "windows": [float(w1), float(w2)],
            "spread_last_window": spread_last, "steps": res.steps,
            "front_speed_series": res.front_speed_series, "final_field": res.final}
    return EffectiveHEstimate(np.asarray(p, dtype=float), float(value), float(cell_all.min()),
                              float(cell_all.max()), "large_time", hist, bool(converged))


def discounted_solve(disc: Discretization, lam: float, v0: NDArray, tol: float, max_iter: int,
                     cfl: float = 0.5) -> tuple[NDArray, float, int]:
    """Pseudo-time relaxation of ``lam v + H = 0``; returns (v, residual, iterations).

    The flux is blind to constants, so the mean mode (which would relax only
    at rate ``lam``) is solved exactly each sweep: ``<v> = -<F>/lam``.
    """
    v = np.array(v0, dtype=float)
    res = math.inf
    for it in range(1, max_iter + 1):
        F, rate = disc.flux(v)
        R = lam * v + F
        res = float(np.max(np.abs(R)))
        if res < tol * lam:
            return v, res, it
        dt = cfl / (rate + lam)
        Rm = float(R.mean())
        v = v - dt * (R - Rm) - Rm / lam
        if not np.isfinite(res):
            break
    raise NonConvergenceError(f"discounted problem (lambda={lam}) stalled with residual {res:.3e}",
                              residual=res, partial=v)


def hbar_discounted(spec: GEquationSpec, p: ArrayLike, grid: PeriodicGrid,
                    lambda_schedule: Sequence[float] = (0.2, 0.1, 0.05, 0.025),
                    tol: float = 1e-5, max_iter: int = 2_000_000, cfl: float = 0.5,
                    eps: float | None = None) -> EffectiveHEstimate:
    """H̄(p) from ``-<lam v_lam>`` extrapolated linearly to ``lam = 0``.

    The two smallest discounts feed the extrapolation; ``osc(lam v_lam)`` and
    ``max |lam v_lam|`` are reported per discount.
    """
    lams = [float(l) for l in lambda_schedule]
    if not lams or any(l <= 0 for l in lams) or any(b >= a for a, b in zip(lams, lams[1:])):
        raise ConfigurationError("lambda schedule must be positive and strictly decreasing")
    disc = Discretization(spec, grid, p, eps)
    F0, _ = disc.flux(np.zeros(grid.shape))
    v = -np.full(grid.shape, float(F0.mean())) / lams[0]
    prev = None
    E, oscs, maxes, iters, fields = [], [], [], [], []
    for lam in lams:
        if prev is not None:
            m = float(v.mean())
            v = v - m + m * prev / lam
        v, r, it = discounted_solve(disc, lam, v, tol, max_iter, cfl)
        lv = lam * v
        E.append(float(-lv.mean()))
        oscs.append(float(lv.max() - lv.min()))
        maxes.append(float(np.abs(lv).max()))
        iters.append(it)
        fields.append(ScalarField(grid, v.copy()))
        prev = lam
    if len(lams) == 1:
        value = E[0]
    else:
        l1, l2 = lams[-2], lams[-1]
        value = (l1 * E[-1] - l2 * E[-2]) / (l1 - l2)
    lv = lams[-1] * fields[-1].values
    hist = {"lambdas": lams, "lambda_values": E, "lambda_osc": oscs, "lambda_max": maxes,
            "iterations": iters, "fields": fields}
    return EffectiveHEstimate(np.asarray(p, dtype=float), float(value), float(-lv.max()), float(-lv.min()),
                              "discounted", hist, True)


def discounted_bound(spec: GEquationSpec, p: ArrayLike) -> float:
    """Upper bound ``|p| (max a + A max|V|)`` on ``max |lam v_lam|``."""
    lam = spec.laminar
    a = float(lam) if isinstance(lam, (int, float)) else float(np.max(lam.values)) if isinstance(lam, ScalarField) else 1.0
    p = np.asarray(p, dtype=float)
    return float(np.linalg.norm(p)) * (a + spec.flow.A * max_speed(spec.flow))
