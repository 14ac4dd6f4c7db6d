"""
Blowup probability when k and a are constant and b = 0.

In this case the whole path functional E(inf) is an exponential functional of
Brownian motion, and P(tau* < inf) is a regularized incomplete gamma value.
For a = k = 1, beta = C = 1 and phi = psi0 the shape is 2 and the argument
pi/4. We compare that number with a long-horizon Monte Carlo estimate.
"""
import math

from spdeblowup import montecarlo as mc
from spdeblowup.bounds import remark_const_lower
from spdeblowup.functionals import ModelParams
from spdeblowup.noise import CoefficientSpec as C, DependenceMode, TimeGrid

N_PATHS = 4000  # the acceptance run uses 10^4

params = ModelParams(
    H=0.75, beta=1.0, C_low=1.0, Lambda=1.0, lambda0=1.0,
    a=C(1.0), b=C(0.0), k=C(1.0),
    pairing=math.pi / 8, psi_sup=0.5, p_scale=1.0,
)
exact = remark_const_lower(params)
print(f"gamma shape {exact.extras['mu']:.3f}, argument {exact.extras['theta']:.6f}")
print(f"P(Z <= theta)                   {exact.value:.5f}")

cfg = mc.ExperimentConfig(params, DependenceMode.identical(), TimeGrid(50.0, 20_000), N_PATHS, master_seed=1, chunk=100)
est = mc.estimate_tau_star_cdf(cfg, T_values=(50.0,))[0]
print(f"Monte Carlo P(tau* <= 50)       {est.estimate:.5f}  95% CI [{est.lo:.5f}, {est.hi:.5f}]")
