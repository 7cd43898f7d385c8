"""Zeros of Kostlan-Shub-Smale polynomials on spheres.

Zero counts on the circle and nodal lengths on the 2-sphere against their
closed-form means, followed by the scaled covariance quantities at angle
z/sqrt(n) next to their large-n limits.
"""

import math

import numpy as np

from kacrice.kss import (
    count_zeros_circle,
    expected_zero_count,
    expected_zero_volume,
    nodal_length_sphere,
    sample_kss,
    scaled_limits,
    scaled_values,
)
from kacrice.rng import derive_seed

print("zeros on S^1")
for n in (1, 4, 9, 25):
    c = [count_zeros_circle(sample_kss(n, 2, 1, derive_seed(1, i, "kss"))) for i in range(2000)]
    print(f"  n={n:3d}  mean {np.mean(c):7.3f}  closed form {expected_zero_count(n, 2):7.3f}")

print("\nnodal length on S^2 (icosphere level 5)")
for n in (1, 2, 4):
    L = [nodal_length_sphere(sample_kss(n, 3, 1, derive_seed(2, i, "kss")), 5) for i in range(100)]
    print(f"  n={n}  mean {np.mean(L):7.3f}  closed form {expected_zero_volume(n, 3, 1):7.3f}")

print("\nscaled quantities at n = 10^4 versus their limits")
for z in (0.5, 1.0, 2.0):
    lim, val = scaled_limits(z), scaled_values(10_000, z)
    row = "  ".join(f"{k}={val[k]:+.4f}({lim[k]:+.4f})" for k in ("A", "B", "sigma2", "rho"))
    print(f"  z={z}: {row}")
print(f"\n2 pi sqrt 2 = {2 * math.pi * math.sqrt(2):.4f}")
