"""Shape of the ancestral equilibrium.

The CASP equilibrium is close to Normal(N p, N p (1-p)) with
p = s/(rho^2/2 + s), and the Moran version is exactly Binomial(N, p)
conditioned positive. Prints a coarse text histogram of each.
"""
import math

import numpy as np

from cannings_asg import PopulationParams
from cannings_asg.casp import CaspParams, sample_equilibrium
from cannings_asg.moran import (MoranParams, masp_equilibrium_pmf, occupation_pmf,
                                simulate_masp_embedded)
from cannings_asg.stats import derive_stream, normality_check_casp, tv_distance


def bars(values, weights, width=50):
    top = max(weights)
    for v, w in zip(values, weights):
        print(f"{v:>5} {'#' * int(round(width * w / top))}")


p = PopulationParams.from_exponent(10_000, 0.6)
cfg = CaspParams(p, thinning=math.ceil(4 / p.s), n_samples=5000, n_chains=4)
smp = sample_equilibrium(cfg, seed=2)
chk = normality_check_casp(smp.values, p.n_pop, p.s, p.rho2)
print(f"CASP N={p.n_pop} s={p.s:.3e}: mean {smp.values.mean():.2f} vs mu_N {chk.mu:.2f}, "
      f"KS to normal {chk.ks:.3f}")
edges = np.arange(50, 115, 5)
counts, _ = np.histogram(smp.values, edges)
bars(edges[:-1], counts / counts.sum())

mp = MoranParams(100, 0.05, 1.0)
traj = simulate_masp_embedded(mp, 9, 200_000, derive_stream(3, 0))
occ = occupation_pmf(traj, mp)
exact = masp_equilibrium_pmf(mp)
print(f"\nMASP N=100: TV to Binomial conditioned positive {tv_distance(occ, exact):.4f}")
bars(range(1, 21), occ[:20])
