"""Fixation probabilities against Haldane's 2s/rho^2.

For moderately weak selection s = N^-b the dual estimator E[A_eq]/N should
approach 2s/rho^2. Already at these sizes the ratio column sits within a
percent or so of 1; Dirichlet weights halve the answer because their rho^2
is 2.
"""
from cannings_asg import PopulationParams, SymmetricDirichlet, WrightFisher
from cannings_asg.casp import CaspParams, estimate_fixation_dual
from cannings_asg.moran import haldane_approx, moran_fixation_exact, MoranParams

print(f"{'weights':>12} {'N':>7} {'b':>4} {'estimate':>10} {'se':>9} {'ratio':>6}")
for weights in (WrightFisher(), SymmetricDirichlet(1.0)):
    for n in (1_000, 5_000, 20_000):
        for b in (0.6, 0.7):
            p = PopulationParams.from_exponent(n, b, weights)
            r = estimate_fixation_dual(CaspParams(p, n_samples=2000), seed=n)
            ratio = r.point / haldane_approx(p.s, p.rho2)
            print(f"{str(weights):>12} {n:>7} {b:>4} {r.point:>10.6f} {r.stderr:>9.2e} "
                  f"{ratio:>6.3f}")

# the Moran model with matching pair-coalescence rate gives the closed form
p = PopulationParams.from_exponent(20_000, 0.7, SymmetricDirichlet(1.0))
print("Moran closed form, gamma = rho^2:", moran_fixation_exact(MoranParams(p.n_pop, p.s, p.rho2)))
