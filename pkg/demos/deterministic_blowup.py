"""
Noise-free blowup on (0, pi).

With a = b = 0 the random functional E(t) is deterministic, so the lower and
upper hitting times have closed forms. Here k = sqrt(2), lambda0 = 1, beta = 1
and phi = (16/pi) psi0, so <phi, psi0> = 2 and

    E(t) = 1 - exp(-t),    tau* solves E = 1/2,    tau* = ln 2.

The spectral solver should blow up no later than tau* and no earlier than the
lower time tau_*.
"""
import math

from spdeblowup.functionals import tau_lower, tau_star
from spdeblowup.noise import CoefficientSpec, NoisePath, TimeGrid
from spdeblowup.spde import SpectralDomain, check_envelope, eigen_initial, params_for_domain, solve_rpde

P_SCALE = 16 / math.pi

dom = SpectralDomain(64)
params = params_for_domain(dom, P_SCALE, k=CoefficientSpec(math.sqrt(2.0)))
N = NoisePath.zeros(TimeGrid(1.0, 1000))

lo, up = tau_lower(params, N), tau_star(params, N)
rec = solve_rpde(eigen_initial(P_SCALE, dom), params, N, domain=dom)

print(f"pairing <phi, psi0>   {params.pairing:.6f}")
print(f"threshold xi          {params.xi:.6f}")
print(f"lower time tau_*      {lo.value:.6f}")
print(f"solver blowup time    {rec.tau_num.value:.6f}")
print(f"upper time tau*       {up.value:.6f}   (ln 2 = {math.log(2):.6f})")

env = check_envelope(rec, params, dom)
print(f"envelope check on {env.n_checked} nodes: {'ok' if env.ok else 'violated'}")
