"""Level crossings of a stationary Gaussian path on [0, 1].

Simulates paths with the squared-exponential covariance, counts crossings
of a few levels, and sets the counts beside the first two factorial moments
from the Kac-Rice integrals. The Kac counter with a shrinking window is
shown converging to the exact count on one longer path.
"""

import math

import numpy as np

from kacrice.counting import count_crossings_1d, kac_counter_1d
from kacrice.gaussian_core import GaussianCovariance
from kacrice.rice import expected_crossings, second_factorial_moment
from kacrice.rng import derive_seed
from kacrice.sampler import simulate_stationary_1d

model = GaussianCovariance()
h = 1e-3
n = int(round(1 / h)) + 1
paths = [simulate_stationary_1d(model, n, h, seed=derive_seed(2024, i)) for i in range(1000)]

print(f"{'level':>6} {'E[N] Rice':>10} {'MC mean':>9} {'M2 quad':>9} {'MC N(N-1)':>10}")
for y in (0.0, 0.5, 1.5):
    counts = np.array([count_crossings_1d(p, y, refine=True).count for p in paths], dtype=float)
    en = float(expected_crossings(1.0, 1.0, y, 1.0))
    m2 = float(second_factorial_moment(model, y, 1.0).value)
    print(f"{y:6.2f} {en:10.5f} {counts.mean():9.5f} {m2:9.5f} {np.mean(counts * (counts - 1)):10.5f}")

long = simulate_stationary_1d(model, 20001, h, seed=derive_seed(2025, 0))
exact = count_crossings_1d(long, 0.0, refine=True).count
print(f"\none path on [0, 20]: {exact} zero crossings (mean {20 / math.pi:.2f})")
for delta in (0.2, 0.1, 0.05, 0.02):
    print(f"  Kac counter, delta={delta:<5} {kac_counter_1d(long, 0.0, delta):.4f}")
print(f"\n1/pi = {1 / math.pi:.5f}")
