"""Homogeneous Gaussian polynomial systems with multinomial coefficient variances."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np
from scipy import special

from .rng import make_rng
from .trigpoly import TrigPoly, count_roots_trig

SIZE_GUARD = 10**7


def n_monomials(n: int, d: int) -> int:
    return math.comb(n + d - 1, d - 1)


@lru_cache(maxsize=64)
def multi_indices(n: int, d: int) -> np.ndarray:
    """All z in N^d with |z| = n, in colexicographic order (read-only)."""
    if n < 0 or d < 1:
        raise ValueError("need n >= 0 and d >= 1")
    if n_monomials(n, d) > SIZE_GUARD:
        raise MemoryError(f"{n_monomials(n, d)} monomials exceed the size guard {SIZE_GUARD}")
    Z = np.zeros((n_monomials(n, d), d), dtype=np.int64)
    for row, combo in enumerate(combinations_with_replacement(range(d), n)):
        np.add.at(Z[row], list(combo), 1)
    Z = Z[np.lexsort(Z.T)]  # last column is the primary key
    Z.setflags(write=False)
    return Z


def multinomial(Z: np.ndarray) -> np.ndarray:
    n = Z.sum(axis=1)
    return np.exp(special.gammaln(n + 1) - special.gammaln(Z + 1).sum(axis=1))


@dataclass(frozen=True)
class KSSSystem:
    """j homogeneous polynomials of degree n in d variables.

    ``coefficients[l, k]`` multiplies t^{Z[k]} in equation l, Z = multi_indices(n, d).
    ``rotation`` (if set) evaluates the composed system t -> P(R t).
    """

    n: int
    d: int
    j: int
    coefficients: np.ndarray
    seed: int | None = None
    rotation: np.ndarray | None = None

    def __post_init__(self):
        if self.n < 1 or self.d < 2 or not 1 <= self.j <= self.d - 1:
            raise ValueError("need n >= 1, d >= 2, 1 <= j <= d-1")
        c = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        if c.shape != (self.j, n_monomials(self.n, self.d)):
            raise ValueError(f"coefficients must have shape {(self.j, n_monomials(self.n, self.d))}")
        object.__setattr__(self, "coefficients", c)

    @property
    def indices(self) -> np.ndarray:
        return multi_indices(self.n, self.d)

    def rotated(self, Q: np.ndarray) -> "KSSSystem":
        Q = np.asarray(Q, dtype=float)
        R = Q if self.rotation is None else self.rotation @ Q
        return dataclasses.replace(self, rotation=R)

    def values(self, T: np.ndarray) -> np.ndarray:
        """P at points T (..., d); shape (..., j). Points need not be unit."""
        T = np.asarray(T, dtype=float)
        if self.rotation is not None:
            T = T @ self.rotation.T
        mono = _monomials(T.reshape(-1, self.d), self.indices, self.n)
        return (mono @ self.coefficients.T).reshape(T.shape[:-1] + (self.j,))

    def ambient_gradient(self, T: np.ndarray) -> np.ndarray:
        """Free gradient, shape (..., j, d)."""
        T = np.asarray(T, dtype=float)
        R = self.rotation
        if R is not None:
            T = T @ R.T
        flat = T.reshape(-1, self.d)
        Z = self.indices
        pw = _power_table(flat, self.n)
        out = np.empty((flat.shape[0], self.j, self.d))
        for k in range(self.d):
            Zk = Z.copy()
            Zk[:, k] = np.maximum(Zk[:, k] - 1, 0)
            mono = _monomials_from_table(pw, Zk) * Z[:, k]
            out[:, :, k] = mono @ self.coefficients.T
        if R is not None:
            out = out @ R
        return out.reshape(T.shape[:-1] + (self.j, self.d))


def _power_table(T: np.ndarray, n: int) -> np.ndarray:
    """pw[p, i, k] = T[i, k]^p for p = 0..n."""
    pw = np.empty((n + 1,) + T.shape)
    pw[0] = 1.0
    for p in range(1, n + 1):
        pw[p] = pw[p - 1] * T
    return pw


def _monomials_from_table(pw: np.ndarray, Z: np.ndarray) -> np.ndarray:
    out = np.ones((pw.shape[1], Z.shape[0]))
    for k in range(Z.shape[1]):
        out *= pw[Z[:, k], :, k].T
    return out


def _monomials(T: np.ndarray, Z: np.ndarray, n: int) -> np.ndarray:
    return _monomials_from_table(_power_table(T, n), Z)


def sample_kss(n: int, d: int, j: int, seed: int) -> KSSSystem:
    """Independent N(0, n!/prod z_i!) coefficients for each of the j equations."""
    M = n_monomials(n, d)
    if M * j > SIZE_GUARD:
        raise MemoryError(f"{M * j} coefficients exceed the size guard {SIZE_GUARD}")
    Z = multi_indices(n, d)
    rng = make_rng(seed)
    g = rng.standard_normal((j, M))
    return KSSSystem(n, d, j, g * np.sqrt(multinomial(Z))[None, :], seed=seed)


def tangent_frame(t: np.ndarray) -> np.ndarray:
    """Orthonormal basis of t-perp as the columns of a d x (d-1) matrix.

    Built from the Householder reflection that sends e_1 to +-t; any frame
    would do since all exported quantities are frame-invariant.
    """
    t = np.asarray(t, dtype=float)
    e1 = np.zeros_like(t)
    e1[0] = 1.0
    v = t - e1 if t[0] <= 0 else t + e1
    H = np.eye(t.size) - 2 * np.outer(v, v) / (v @ v)
    return H[:, 1:]


def evaluate_kss(system: KSSSystem, t) -> tuple[np.ndarray, np.ndarray]:
    """Values (j,) and spherical gradient (j, d-1) in the frame of ``tangent_frame``."""
    t = np.asarray(t, dtype=float)
    if t.shape != (system.d,):
        raise ValueError(f"point must have shape ({system.d},)")
    if abs(np.linalg.norm(t) - 1) > 1e-12:
        raise ValueError("point is not on the unit sphere")
    vals = system.values(t)
    grad = system.ambient_gradient(t)
    return vals, grad @ tangent_frame(t)


@dataclass(frozen=True)
class ScaledCovQuantities:
    theta: float
    n: int
    A: float
    B: float
    C: float
    D: float
    sigma2: float
    rho: float


def _cos_power(theta, p, n):
    # cos^p(theta) with p close to n, via logs for accuracy at large n
    c = np.cos(theta)
    return np.sign(c) ** p * np.exp(p * np.log(np.abs(c)))


def scaled_cov_quantities(n: int, theta: float, tol: float = 0.0) -> ScaledCovQuantities:
    """Covariance ingredients of (X, X'/sqrt n) at two points at angle theta.

    A = -sqrt(n) cos^{n-1} sin, B = cos^n - (n-1) cos^{n-2} sin^2,
    C = cos^n, D = cos^{n-1}; sigma2 and rho are the conditional variance and
    correlation of the derivatives along the joining geodesic given both values vanish.

    With u = sin^2 theta the denominator 1 - C^2 - A^2 equals P(Bin(n, u) >= 2)
    and the rho numerator is cos^{n-2} (P(Bin(n, u) >= 2) - n u P(Bin(n-1, u) >= 1)),
    which avoids the cancellation of the direct formulas at small angles.
    """
    if not 0 < theta < math.pi:
        raise ValueError("theta must lie in (0, pi)")
    s = math.sin(theta)
    c = math.cos(theta)
    C = float(_cos_power(theta, n, n))
    D = float(_cos_power(theta, n - 1, n))
    A = -math.sqrt(n) * D * s
    cn2 = float(_cos_power(theta, n - 2, n)) if n >= 2 else 0.0
    B = C - (n - 1) * cn2 * s * s
    u = s * s
    log_c2 = math.log1p(-u) if u < 1 else -math.inf
    one_m_c2 = -math.expm1(n * log_c2)
    den = float(special.betainc(2, n - 1, u)) if n >= 2 else 0.0
    if one_m_c2 <= tol or den <= tol:
        raise ArithmeticError(f"conditioning singular at theta={theta!r}")
    sigma2 = den / one_m_c2
    tail1 = -math.expm1((n - 1) * log_c2)
    rho = cn2 * (den - n * u * tail1) / den
    return ScaledCovQuantities(theta, n, A, B, C, D, sigma2, rho)


def scaled_limits(z: float) -> dict:
    """Limits of the quantities above at theta = z/sqrt(n) as n grows."""
    e = math.exp(-z * z)
    h = math.exp(-z * z / 2)
    return {
        "cos2n": e,
        "A": -z * h,
        "B": (1 - z * z) * h,
        "C": h,
        "D": h,
        "sigma2": (1 - (1 + z * z) * e) / (1 - e),
        "rho": h * (1 - z * z - e) / (1 - (1 + z * z) * e),
    }


def scaled_values(n: int, z: float) -> dict:
    q = scaled_cov_quantities(n, z / math.sqrt(n))
    return {
        "cos2n": float(_cos_power(z / math.sqrt(n), 2 * n, n)),
        "A": q.A, "B": q.B, "C": q.C, "D": q.D, "sigma2": q.sigma2, "rho": q.rho,
    }


def expected_zero_count(n: int, d: int) -> float:
    """Mean number of zeros on S^{d-1} of a square system (j = d-1)."""
    if n < 1 or d < 2:
        raise ValueError("need n >= 1, d >= 2")
    return 2 * n ** ((d - 1) / 2)


def sphere_area(k: int) -> float:
    """Surface measure of the unit sphere S^k in R^{k+1}."""
    return 2 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2)


def mean_sqrt_gram(j: int, m: int) -> float:
    """E[det(G G^T)^{1/2}] for a j x m standard Gaussian matrix, via the
    product of independent chi variables with m, m-1, ..., m-j+1 degrees."""
    out = 1.0
    for i in range(j):
        k = m - i
        out *= math.sqrt(2) * math.exp(special.gammaln((k + 1) / 2) - special.gammaln(k / 2))
    return out


def expected_zero_volume(n: int, d: int, j: int) -> float:
    """Mean (d-1-j)-volume of the zero set on S^{d-1}."""
    if not (1 <= j < d - 1) or n < 1:
        raise ValueError("need 1 <= j < d-1 and n >= 1")
    closed = 2 * n ** (j / 2) * math.pi ** ((d - j) / 2) / math.gamma((d - j) / 2)
    via_rice = n ** (j / 2) * sphere_area(d - 1) / (2 * math.pi) ** (j / 2) * mean_sqrt_gram(j, d - 1)
    if abs(closed - via_rice) > 1e-12 * closed:
        raise ArithmeticError(f"zero volume routes disagree: {closed} vs {via_rice}")
    return closed


def circle_restriction(system: KSSSystem, equation: int = 0) -> TrigPoly:
    """theta -> P(cos theta, sin theta) as a trigonometric polynomial of degree n."""
    if system.d != 2:
        raise ValueError("circle restriction needs d = 2")
    n = system.n
    M = 4 * n + 4
    th = 2 * np.pi * np.arange(M) / M
    v = system.values(np.column_stack([np.cos(th), np.sin(th)]))[:, equation]
    c = np.fft.rfft(v) / M
    a = -2 * c[1:n + 1].imag
    b = 2 * c[1:n + 1].real
    const = c[0].real
    big = max(np.max(np.abs(a)), np.max(np.abs(b)), abs(const))
    a[np.abs(a) < 1e-13 * big] = 0.0
    b[np.abs(b) < 1e-13 * big] = 0.0
    return TrigPoly(a, b, const, scale=1.0)


def count_zeros_circle(system: KSSSystem) -> int:
    """Exact number of zeros of P on the unit circle (d = 2, j = 1)."""
    if system.d != 2 or system.j != 1:
        raise ValueError("need d = 2 and j = 1")
    return count_roots_trig(circle_restriction(system), 0.0)


@lru_cache(maxsize=8)
def icosphere(level: int) -> tuple[np.ndarray, np.ndarray]:
    """Vertices on S^2 and triangles of the level-``level`` subdivided icosahedron."""
    p = (1 + math.sqrt(5)) / 2
    V = np.array([
        [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
        [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
        [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
    ], dtype=float)
    F = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    for _ in range(level):
        E = np.sort(np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(E, axis=0, return_inverse=True)
        inv = inv.ravel()
        mid = V[uniq[:, 0]] + V[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        m = len(F)
        a, b, c = F[:, 0], F[:, 1], F[:, 2]
        ab, bc, ca = inv[:m] + len(V), inv[m:2 * m] + len(V), inv[2 * m:] + len(V)
        V = np.vstack([V, mid])
        F = np.concatenate([
            np.column_stack([a, ab, ca]), np.column_stack([b, bc, ab]),
            np.column_stack([c, ca, bc]), np.column_stack([ab, bc, ca]),
        ])
    V.setflags(write=False)
    F.setflags(write=False)
    return V, F


def zero_set_length_on_mesh(values: np.ndarray, V: np.ndarray, F: np.ndarray) -> float:
    """Length of the zero curve of a function sampled at mesh vertices.

    Marching triangles with linear interpolation along edges; each segment's
    endpoints are pushed to the sphere and measured by the arc 2 arcsin(c/2).
    """
    f = values[F]
    pos = f >= 0
    npos = pos.sum(axis=1)
    cut = (npos == 1) | (npos == 2)
    f, Fc, pos = f[cut], F[cut], pos[cut]
    # the odd vertex is the one whose class differs from the other two
    odd = np.where(pos.sum(axis=1) == 1, np.argmax(pos, axis=1), np.argmin(pos, axis=1))
    rows = np.arange(len(Fc))
    o1, o2 = (odd + 1) % 3, (odd + 2) % 3

    def cross(i, k):
        fa, fb = f[rows, i], f[rows, k]
        s = fa / (fa - fb)
        P = (1 - s)[:, None] * V[Fc[rows, i]] + s[:, None] * V[Fc[rows, k]]
        return P / np.linalg.norm(P, axis=1, keepdims=True)

    P1, P2 = cross(odd, o1), cross(odd, o2)
    c = np.linalg.norm(P1 - P2, axis=1)
    return float(np.sum(2 * np.arcsin(np.minimum(c / 2, 1.0))))


def nodal_length_sphere(system: KSSSystem, level: int = 6) -> float:
    """Length of {P = 0} on S^2 for a single equation in three variables."""
    if system.d != 3 or system.j != 1:
        raise ValueError("need d = 3 and j = 1")
    if level < 5:
        raise ValueError("mesh level must be >= 5")
    V, F = icosphere(level)
    return zero_set_length_on_mesh(system.values(V)[:, 0], V, F)
