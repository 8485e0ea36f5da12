import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gequation.errors import BranchError, ConfigurationError, ResolutionError
from gequation.flowlib import FlowSpec, Profile1D
from gequation.grid import PeriodicGrid
from gequation.hjsolver import GEquationSpec, SolverConfig
from gequation.homog import (bifurcation_scan, curvature_comparison, discounted_bound, exact_shear_hbar,
                             fit_growth, growth_sweep, hbar_discounted, hbar_large_time, homogenization_rate,
                             kpp_speed, loglaw_ratio, strain_shear_hbar)

EULER = SolverConfig(t_end=20.0, time_integrator="euler")


def cellular(A):
    return GEquationSpec("inviscid", flow=FlowSpec("cellular", A=A))


# ---------------------------------------------------------------- large time

def test_large_time_without_flow():
    est = hbar_large_time(GEquationSpec("inviscid", flow=FlowSpec("zero")), [0.6, 0.8],
                          SolverConfig(t_end=2.0), PeriodicGrid(2, 16))
    assert est.value == pytest.approx(1.0, abs=1e-6)
    assert est.converged


def test_large_time_shear():
    est = hbar_large_time(GEquationSpec("inviscid", flow=FlowSpec("shear2d")), [0.0, 1.0], EULER,
                          PeriodicGrid(2, (256, 8)))
    assert est.value == pytest.approx(2.0, rel=0.01)


def test_large_time_cellular_enhancement_and_envelope():
    est = hbar_large_time(cellular(4.0), [1.0, 0.0], EULER, PeriodicGrid(2, 64))
    assert est.converged
    assert est.value > 1.0
    assert est.lower <= est.value <= est.upper


# ---------------------------------------------------------------- discounted

def test_discounted_without_flow():
    est = hbar_discounted(GEquationSpec("inviscid", flow=FlowSpec("zero")), [0.6, 0.8], PeriodicGrid(2, 16))
    assert est.value == pytest.approx(1.0, abs=1e-6)
    for lv, o in zip(est.history["lambda_values"], est.history["lambda_osc"]):
        assert lv == pytest.approx(1.0, abs=1e-6)
        assert o < 1e-6


@pytest.mark.parametrize("spec", [cellular(1.0), cellular(4.0),
                                  GEquationSpec("viscous", d=0.2, flow=FlowSpec("cellular", A=2.0)),
                                  GEquationSpec("curvature", d=0.1, flow=FlowSpec("cellular", A=2.0)),
                                  GEquationSpec("inviscid", flow=FlowSpec("shear2d", A=3.0))],
                         ids=["cell1", "cell4", "viscous", "curvature", "shear"])
def test_discounted_bound_holds(spec):
    p = np.array([0.6, 0.8])
    est = hbar_discounted(spec, p, PeriodicGrid(2, 32))
    # |p| = 1 and max|V| = 1 for both flows, so the bound is 1 + A
    assert discounted_bound(spec, p) == pytest.approx(1.0 + spec.flow.A, abs=1e-8)
    assert max(est.history["lambda_max"]) <= 1.0 + spec.flow.A + 1e-6


def test_discounted_agrees_with_large_time():
    g = PeriodicGrid(2, 64)
    a = hbar_large_time(cellular(4.0), [1.0, 0.0], EULER, g)
    b = hbar_discounted(cellular(4.0), [1.0, 0.0], g)
    assert a.converged and b.converged
    assert b.value == pytest.approx(a.value, rel=0.01)


def test_discounted_schedule_validation():
    with pytest.raises(ConfigurationError):
        hbar_discounted(cellular(1.0), [1.0, 0.0], PeriodicGrid(2, 16), lambda_schedule=(0.1, 0.2))


# ---------------------------------------------------------------- exact shear

@given(st.floats(-5, 5), st.floats(-5, 5))
def test_exact_shear_without_flow(a, b):
    assert exact_shear_hbar(lambda y: 0.0 * y, [a, b]) == pytest.approx(math.hypot(a, b), abs=1e-9)


def test_exact_shear_case_one():
    assert exact_shear_hbar(lambda y: np.sin(2 * np.pi * y), [0.0, 1.0]) == pytest.approx(2.0, abs=1e-12)
    assert exact_shear_hbar(Profile1D("sin"), [0.0, 1.0]) == pytest.approx(2.0, abs=1e-12)


def test_exact_shear_case_two_against_rectangle_oracle():
    # oracle: 10^6-sample rectangle rule for I(H) and plain bisection
    y = (np.arange(1_000_000) + 0.5) / 1_000_000
    s = np.sin(2 * np.pi * y)
    I = lambda H: float(np.mean(np.sqrt(np.maximum((H - s) ** 2 - 1.0, 0.0))))
    lo, hi = 2.0, 6.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if I(mid) < 3.0 else (lo, mid)
    val = exact_shear_hbar(lambda x: np.sin(2 * np.pi * x), [3.0, 1.0])
    assert val == pytest.approx(0.5 * (lo + hi), abs=1e-6)


def test_exact_shear_rejects_bad_profiles():
    with pytest.raises(ConfigurationError):
        exact_shear_hbar(lambda y: np.full_like(y, np.nan), [1.0, 1.0])
    with pytest.raises(ConfigurationError):
        exact_shear_hbar(3.0, [1.0, 1.0])


# ---------------------------------------------------------------- strain shear

def test_strain_constant_profile():
    c = 0.4
    res = strain_shear_hbar(lambda x: np.full_like(x, c), 2.0, 0.3)
    assert res.E == pytest.approx(math.sqrt(5.0) + c, abs=1e-10)
    assert abs(res.dE_dd) < 1e-8


def test_strain_decreasing_in_d():
    f = lambda x: 0.3 * np.sin(2 * np.pi * x)
    assert strain_shear_hbar(f, 2.0, 0.1).dE_dd < 0


def test_strain_reduces_to_inviscid_shear_at_zero_d():
    f = lambda x: 0.3 * np.sin(2 * np.pi * x)
    assert strain_shear_hbar(f, 2.0, 0.0).E == pytest.approx(exact_shear_hbar(f, [2.0, 1.0]), abs=1e-7)


def test_strain_branch_error():
    f = lambda x: 0.3 * np.sin(2 * np.pi * x)
    with pytest.raises(BranchError):
        strain_shear_hbar(f, 0.01, 0.1)


# ---------------------------------------------------------------- growth laws

def test_growth_sweep_without_flow():
    spec = GEquationSpec("inviscid", flow=FlowSpec("zero"))
    fit = growth_sweep(spec, [1.0, 0.0], [1.0, 2.0, 4.0], PeriodicGrid(2, 16), SolverConfig(t_end=2.0))
    assert np.allclose(fit.H_values, 1.0, atol=1e-9)
    assert fit.fits["linear"]["a"] == pytest.approx(0.0, abs=1e-9)
    assert not fit.partial


def test_fit_growth_recovers_loglaw():
    A = np.array([8.0, 16.0, 32.0, 64.0, 128.0])
    H = A * math.pi / (2 * np.log(A) + 1.5)
    fits, best, band_C, ratios = fit_growth(A, H, [1.0, 0.0])
    assert best == "loglaw"
    assert fits["loglaw"]["C"] == pytest.approx(1.5, abs=1e-8)
    assert band_C == pytest.approx(1.5, abs=1e-6)
    assert np.allclose(ratios, 1.0, atol=1e-6)
    assert np.allclose(loglaw_ratio(A, H, [1.0, 0.0], 1.5), 1.0)


def test_growth_sweep_rejects_unsorted():
    with pytest.raises(ConfigurationError):
        growth_sweep(cellular(1.0), [1.0, 0.0], [2.0, 1.0], PeriodicGrid(2, 16))


# ---------------------------------------------------------------- properties

@pytest.fixture(scope="module")
def cell_values():
    g = PeriodicGrid(2, 64)
    spec = cellular(2.0)
    cache = {}

    def H(p):
        key = tuple(np.round(p, 12))
        if key not in cache:
            cache[key] = hbar_large_time(spec, p, EULER, g).value
        return cache[key]
    return H


@pytest.mark.parametrize("p", [(1.0, 0.0), (0.6, 0.8), (1.0, 1.0)])
def test_homogeneity(cell_values, p):
    p = np.array(p)
    for s in (0.5, 2.0):
        assert cell_values(s * p) == pytest.approx(s * cell_values(p), rel=0.01)


@pytest.mark.parametrize("p", [(1.0, 0.0), (0.6, 0.8), (-0.3, 1.0), (2.0, 0.5)])
def test_enhancement(cell_values, p):
    assert cell_values(np.array(p)) >= np.linalg.norm(p) - 0.01


@pytest.mark.parametrize("p,q", [((1.0, 0.0), (0.0, 1.0)), ((1.0, 0.5), (-0.5, 1.0)), ((2.0, 0.0), (0.6, 0.8))])
def test_convexity(cell_values, p, q):
    p, q = np.array(p), np.array(q)
    assert cell_values(0.5 * (p + q)) <= 0.5 * (cell_values(p) + cell_values(q)) + 0.01


# ---------------------------------------------------------------- bifurcation

def test_no_cutoff_value_without_flow():
    spec = GEquationSpec("curvature", d=0.2, cutoff=False, flow=FlowSpec("shear3d", A=0.0))
    est = hbar_large_time(spec, [0.5, 0.0, 1.0], SolverConfig(t_end=2.0), PeriodicGrid(2, 16))
    assert est.value == pytest.approx(math.sqrt(1.25), abs=1e-9)


def test_bifurcation_scan_characterization():
    res = bifurcation_scan(A_grid=(0.0, 4.0, 8.0, 12.0), n=32, t_end=10.0)
    assert abs(res.residual_at_root) < 1e-3
    assert res.decreasing
    assert 8.0 < res.A0_characterized < 12.0
    assert res.below_threshold_gap() < 0.01
    assert res.hbar_nocut[0] == pytest.approx(1.0, abs=1e-6)


def test_bifurcation_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        bifurcation_scan(p=(0.0, 0.0, 0.0))
    with pytest.raises(ConfigurationError):
        bifurcation_scan(d=0.0)


# ---------------------------------------------------------------- rate

def test_rate_exact_without_flow():
    spec = GEquationSpec("inviscid", flow=FlowSpec("zero"))
    res = homogenization_rate(spec, [0.0, 1.0], [0.25, 0.125], cells_per_period=32)
    assert res.exact and res.slope is None


def test_rate_resolution_guard():
    spec = GEquationSpec("inviscid", flow=FlowSpec("shear2d"))
    with pytest.raises(ResolutionError):
        homogenization_rate(spec, [0.0, 1.0], [0.25, 0.125], cells_per_period=16)


def test_rate_refinement_is_subdominant():
    # doubling n at fixed eps changes the error by less than 20 percent
    spec = GEquationSpec("inviscid", flow=FlowSpec("shear2d"))
    res = homogenization_rate(spec, [0.0, 1.0], [0.125, 0.0625])
    assert abs(res.refined_error - res.errors[-1]) < 0.2 * res.errors[-1]


# ---------------------------------------------------------------- KPP

@pytest.mark.parametrize("p,d,f0", [((1.0, 0.0), 1.0, 1.0), ((0.6, 0.8), 0.3, 2.0), ((2.0, 1.0), 0.5, 0.1)])
def test_kpp_without_flow(p, d, f0):
    res = kpp_speed(FlowSpec("zero"), p, d, f0)
    exact = 2 * np.linalg.norm(p) * math.sqrt(d * f0)
    assert res.c_T == pytest.approx(exact, rel=1e-6)
    assert all(res.c_T <= res.objective(l, h) + 1e-12 for l, h in res.samples)


def test_kpp_vanishing_reaction():
    assert kpp_speed(FlowSpec("zero"), [1.0, 0.0], 1.0, 1e-6, lam_range=(1e-5, 1e2)).c_T < 0.01


def test_kpp_cellular_enhancement():
    res = kpp_speed(FlowSpec("cellular", A=2.0), [1.0, 0.0], 1.0, 1.0)
    assert res.c_T >= 2.0 - 0.01


# ---------------------------------------------------------------- curvature comparison

def test_curvature_comparison_zero_d():
    res = curvature_comparison([1.0, 0.0], 0.0, [1.0, 2.0], PeriodicGrid(2, 16), SolverConfig(t_end=4.0))
    assert np.array_equal(res.gaps, np.zeros(2))
