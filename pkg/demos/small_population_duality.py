"""Two populations of size N = 2 and N = 5, computed exactly.

Walks through the forward frequency chain, the ancestral selection process
and the hypergeometric duality linking them, then checks a Monte Carlo
estimate against the exact numbers.
"""
import numpy as np

from cannings_asg import PopulationParams
from cannings_asg import duality, exact

p = PopulationParams(2, 0.5)

# forward chain on {0, 1, 2}: k counts wildtype individuals
fwd = exact.forward_transition_matrix(p)
print("forward row from k=1:", np.round(fwd.entries[1], 4))

# ancestral process on {1, 2}
back = exact.casp_transition_matrix(p)
print("CASP matrix:\n", np.round(back.entries, 4))

pi = exact.stationary_distribution(back)
print("CASP equilibrium:", pi)
print("E[A_eq]/N       =", pi @ [1, 2] / 2)
print("P(fixation)     =", exact.absorption_probability(fwd, 1, 0))

# one generation, sample of both individuals from a single wildtype
gap = exact.exact_duality_check(p, k=1, n=2, g=1)
print(f"duality: lhs={gap.lhs:.15f} rhs={gap.rhs:.15f}")

# the same identity by simulation for a bigger population
p5 = PopulationParams(5, 0.3)
ref = exact.exact_duality_check(p5, k=3, n=2, g=4)
est = duality.sampling_duality_mc(p5, 3, 2, 4, replicates=200_000, seed=1)
print(f"N=5 exact {ref.lhs:.5f}")
print(f"  forward side {est.lhs.point:.5f} +- {est.lhs.stderr:.5f}")
print(f"  ancestral side {est.rhs.point:.5f} +- {est.rhs.stderr:.5f}")
