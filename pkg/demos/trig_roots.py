"""Real roots of random trigonometric polynomials on [0, 2 pi).

Compares Monte Carlo root counts with the exact finite-degree mean, then
evaluates the limiting variance constant under both candidate centerings
and shows which one makes the integrand decay.
"""

import numpy as np

from kacrice.rng import derive_seed
from kacrice.trigpoly import count_roots_trig, expected_roots_trig, sample_trig_poly, sinc_limit_variance

print(f"{'N':>5} {'y':>4} {'exact mean':>11} {'MC mean':>9} {'MC var/N':>9}")
for N in (1, 10, 100):
    for y in (0.0, 1.0):
        c = np.array([count_roots_trig(sample_trig_poly(N, derive_seed(7, i, "trig")), y) for i in range(1000)], float)
        print(f"{N:5d} {y:4.1f} {expected_roots_trig(N, y):11.4f} {c.mean():9.4f} {c.var(ddof=1) / N:9.4f}")

res = sinc_limit_variance()
print(f"\nlimiting Var(N)/N = {res.value:.10f}  (centering {res.centering:.6f}, tail bound {res.tail_bound:.1e})")
for name, cand in res.candidates.items():
    print(f"  candidate {name:<12} centering {cand['centering']:.6f}  |integrand| at cutoff {cand['decay_at_cutoff']:.2e}")
