"""Effective Hamiltonian estimators and averaging experiments."""
from .bifurcation import BifurcationResult, bifurcation_scan
from .estimates import METHODS, EffectiveHEstimate, discounted_bound, hbar_discounted, hbar_large_time
from .shear import StrainShearResult, exact_shear_hbar, strain_shear_hbar
from .studies import (CurvatureComparison, GrowthFit, HomogenizationRate, KppSpeedResult, curvature_comparison,
                      fit_growth, growth_sweep, homogenization_rate, kpp_speed, loglaw_ratio)

__all__ = ["BifurcationResult", "bifurcation_scan", "METHODS", "EffectiveHEstimate", "discounted_bound",
           "hbar_discounted", "hbar_large_time", "StrainShearResult", "exact_shear_hbar", "strain_shear_hbar",
           "CurvatureComparison", "GrowthFit", "HomogenizationRate", "KppSpeedResult", "curvature_comparison",
           "fit_growth", "growth_sweep", "homogenization_rate", "kpp_speed", "loglaw_ratio"]
