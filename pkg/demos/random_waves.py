"""Nodal lines and dislocations of random plane waves.

With k0 = sqrt 2 the gradient variance is 1, so the nodal length per unit
area should approach 1/2 and the number of common zeros of two independent
fields per unit area should approach 1/(2 pi).
"""

import math

import numpy as np

from kacrice.counting import count_joint_zeros_2d, level_curve_length_2d
from kacrice.rice import dislocation_density, nodal_length_density
from kacrice.rng import derive_seed
from kacrice.sampler import RandomWaveSpec, simulate_isotropic_2d

spec = RandomWaveSpec(k0=math.sqrt(2.0))
ppw = 32
h = 2 * math.pi / spec.k0 / ppw
n = 10 * ppw + 1
area = ((n - 1) * h) ** 2

lengths, points = [], []
for i in range(40):
    xi = simulate_isotropic_2d(spec, (n, n), h, derive_seed(5, 2 * i, "waves"))
    eta = simulate_isotropic_2d(spec, (n, n), h, derive_seed(5, 2 * i + 1, "waves"))
    lengths.append(level_curve_length_2d(xi, 0.0).length / area)
    points.append(count_joint_zeros_2d(xi, eta) / area)

se = lambda v: np.std(v, ddof=1) / math.sqrt(len(v))
print(f"nodal length/area  {np.mean(lengths):.4f} +- {se(lengths):.4f}   closed form {nodal_length_density(spec.lambda2):.4f}")
print(f"dislocations/area  {np.mean(points):.4f} +- {se(points):.4f}   closed form {dislocation_density(spec.lambda2):.4f}")
