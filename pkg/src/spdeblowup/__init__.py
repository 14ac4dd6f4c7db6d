"""Blowup of a semilinear heat equation driven by mixed Brownian and fractional Brownian noise.

Modules: ``noise`` (path sampling), ``functionals`` (exponential functionals
and hitting times), ``spde`` (spectral mild-form solver), ``bounds``
(analytic probability bounds), ``montecarlo`` (ensembles and the
verification suite), ``cli``.
"""
from .bounds import (
    BoundValue,
    ExponentTriple,
    GammaLawParams,
    M_T,
    check_PB,
    mu_T,
    remark_const_lower,
    thm2_upper,
    thm3_dependent_upper,
    thm3_independent_upper,
    thm4_conditions,
    thm4_corollary,
    thm4_lower,
    thm5_lower,
)
from .functionals import HittingTime, ModelParams, exp_functional, tau_lower, tau_star
from .montecarlo import BoundReport, EstimateResult, ExperimentConfig, run_bound_suite
from .noise import CoefficientSpec, DependenceMode, NoisePath, TimeGrid
from .spde import SpectralDomain, solve_rpde
from .special import reg_gamma_lower, reg_gamma_upper

__version__ = "0.1.0"
