"""Random trigonometric polynomials: sampling, exact root counts, moments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .counting import _cubic_root_counts
from .gaussian_core import SincCovariance
from .rice import abs_product, regression_quantities
from .rng import make_rng

UNIT_TOL = 1e-8
ANGLE_TOL = 1e-7
RESIDUAL_TOL = 1e-6
GRID_FACTOR = 64
# above this degree the O(N^3) eigenvalue route is replaced by the FFT grid
COMPANION_MAX_N = 64


@dataclass(frozen=True)
class TrigPoly:
    """X(t) = scale * sum_n (a_n sin nt + b_n cos nt) + const, n = 1..N.

    ``scale`` defaults to N^{-1/2}; ``const`` is zero for sampled polynomials
    and is used when a general trigonometric polynomial is wrapped.
    """

    a: np.ndarray
    b: np.ndarray
    const: float = 0.0
    scale: float | None = None
    seed: int | None = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.shape != b.shape or a.ndim != 1 or a.size < 1:
            raise ValueError("coefficient vectors must be 1-D of equal length >= 1")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if self.scale is None:
            object.__setattr__(self, "scale", 1.0 / math.sqrt(a.size))

    @property
    def N(self) -> int:
        return int(self.a.size)

    def __call__(self, t, derivative: int = 0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        n = np.arange(1, self.N + 1)
        ph = np.multiply.outer(t, n)
        s, c = np.sin(ph), np.cos(ph)
        nk = n.astype(float) ** derivative
        # d/dt rotates (sin, cos) -> (cos, -sin)
        if derivative % 4 == 0:
            v = s @ (self.a * nk) + c @ (self.b * nk)
        elif derivative % 4 == 1:
            v = c @ (self.a * nk) - s @ (self.b * nk)
        elif derivative % 4 == 2:
            v = -s @ (self.a * nk) - c @ (self.b * nk)
        else:
            v = -c @ (self.a * nk) + s @ (self.b * nk)
        out = self.scale * v
        return out + self.const if derivative == 0 else out

    def shifted(self, c: float) -> "TrigPoly":
        """The polynomial t -> X(t + c)."""
        n = np.arange(1, self.N + 1)
        cs, sn = np.cos(n * c), np.sin(n * c)
        a = self.a * cs - self.b * sn
        b = self.a * sn + self.b * cs
        return TrigPoly(a, b, self.const, self.scale, self.seed)

    def sup_bound(self) -> float:
        return abs(self.const) + self.scale * float(np.sum(np.hypot(self.a, self.b)))

    def on_grid(self, M: int) -> tuple[np.ndarray, np.ndarray]:
        """Values and derivative at t_j = 2 pi j / M via one FFT each."""
        if M <= 2 * self.N:
            raise ValueError("grid too coarse for the degree")
        C = np.zeros(M, dtype=complex)
        n = np.arange(1, self.N + 1)
        C[n] = self.scale * (self.b - 1j * self.a)
        vals = np.real(np.fft.ifft(C)) * M + self.const
        der = np.real(np.fft.ifft(1j * np.arange(M) * np.where(np.arange(M) <= self.N, 1, 0) * C)) * M
        return vals, der


def sample_trig_poly(N: int, seed: int) -> TrigPoly:
    """2N independent standard Gaussian coefficients from the given seed."""
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = make_rng(seed)
    z = rng.standard_normal(2 * N)
    return TrigPoly(z[:N], z[N:], seed=seed)


@dataclass(frozen=True)
class RootCount:
    count: int
    method: str
    roots: np.ndarray = field(repr=False)
    companion_count: int | None = None
    grid_count: int | None = None
    residual: float = 0.0


def _cluster_angles(theta: np.ndarray, tol: float) -> np.ndarray:
    if theta.size == 0:
        return theta
    theta = np.sort(np.mod(theta, 2 * np.pi))
    keep = np.concatenate([[True], np.diff(theta) > tol])
    out = theta[keep]
    if out.size > 1 and (out[0] + 2 * np.pi - out[-1]) <= tol:
        out = out[:-1]
    return out


def _companion_roots(poly: TrigPoly, level: float):
    """Angles of unit-modulus roots of z^N (X(t) - level), z = e^{it}.

    Returns (angles at the strict tolerance, count at a loose tolerance, ok),
    where ok is False if the leading coefficient is negligible.
    """
    N = poly.N
    c = np.zeros(2 * N + 1, dtype=complex)  # c[k] multiplies z^k
    n = np.arange(1, N + 1)
    c[N + n] = poly.scale * (poly.b - 1j * poly.a) / 2
    c[N - n] = poly.scale * (poly.b + 1j * poly.a) / 2
    c[N] = poly.const - level
    big = np.max(np.abs(c))
    if big == 0:
        return np.array([]), 0, False
    # drop exactly vanishing top harmonics, they only add roots at 0 and infinity
    top = N
    while top > 0 and poly.a[top - 1] == 0 and poly.b[top - 1] == 0:
        top -= 1
    if top == 0:
        return np.array([]), 0, True
    c = c[N - top:N + top + 1]
    if abs(c[-1]) < 1e-10 * big:
        return np.array([]), 0, False
    z = np.roots(c[::-1])
    dev = np.abs(np.abs(z) - 1)
    strict = _cluster_angles(np.angle(z[dev < UNIT_TOL]), ANGLE_TOL)
    loose = _cluster_angles(np.angle(z[dev < 1e-4]), ANGLE_TOL)
    return strict, loose.size, True


def _grid_cell_counts(poly: TrigPoly, level: float, factor: int = GRID_FACTOR):
    M = max(factor * poly.N, 64)
    h = 2 * np.pi / M
    v, d = poly.on_grid(M)
    v = v - level
    v1 = np.roll(v, -1)
    d1 = np.roll(d, -1)
    return _cubic_root_counts(v, v1, d * h, d1 * h), v, v1, h


def _grid_roots(poly: TrigPoly, level: float, factor: int = GRID_FACTOR) -> np.ndarray:
    """Roots on [0, 2 pi) from a 64N-point periodic grid with cubic Hermite
    refinement per cell; sign-change cells are bisected to 1e-12."""
    counts, v, v1, h = _grid_cell_counts(poly, level, factor)
    roots = []
    f = lambda t: float(poly(t)) - level
    for j in np.nonzero(counts)[0]:
        t0, t1 = j * h, (j + 1) * h
        if counts[j] == 1 and (v[j] >= 0) != (v1[j] >= 0):
            fa, fb = f(t0), f(t1)
            if v[j] == 0 or fa == 0:
                roots.append(t0)
            elif (fa > 0) != (fb > 0):
                roots.append(optimize.bisect(f, t0, t1, xtol=1e-12))
            else:
                # grid and direct evaluation differ only by round-off here
                roots.append(t1 if abs(fb) < abs(fa) else t0)
        else:
            roots.extend(np.linspace(t0, t1, int(counts[j]) + 2)[1:-1])
    return np.mod(np.array(roots, dtype=float), 2 * np.pi)


def count_roots_detail(poly: TrigPoly, level: float = 0.0, check: bool = False, method: str = "auto") -> RootCount:
    """Root count with the route used and diagnostics.

    The algebraic route is used up to degree ``COMPANION_MAX_N`` (or always
    with method="companion"); its answer is accepted when every kept root has
    a small residual and no further roots sit just off the unit circle.
    Otherwise, or when ``check`` is set, the grid route runs and the two must
    agree. method="grid" counts on the grid only.
    """
    if not np.isfinite(level):
        raise ValueError("level must be finite")
    if method not in ("auto", "companion", "grid"):
        raise ValueError(f"unknown method {method!r}")
    if abs(level) > poly.sup_bound() * (1 + 1e-12) + 1e-300:
        return RootCount(0, "bound", np.array([]), 0, 0)
    if method == "grid" or (method == "auto" and poly.N > COMPANION_MAX_N and not check):
        counts = _grid_cell_counts(poly, level)[0]
        n = int(counts.sum())
        return RootCount(n, "grid", np.array([]), None, n)
    roots, loose, ok = _companion_roots(poly, level)
    scale = poly.sup_bound() + abs(level)
    resid = float(np.max(np.abs(poly(roots) - level)) / scale) if roots.size else 0.0
    trusted = ok and resid <= RESIDUAL_TOL and loose == roots.size
    if trusted and not check:
        return RootCount(int(roots.size), "companion", roots, int(roots.size), None, resid)
    g = _grid_roots(poly, level)
    if ok and g.size != roots.size and (not trusted or check):
        if not trusted:
            raise ArithmeticError(
                f"root count unreliable: companion {roots.size} (residual {resid:.2e}, "
                f"{loose} near circle), grid {g.size}"
            )
        if check:
            raise ArithmeticError(f"root count unreliable: companion {roots.size}, grid {g.size}")
    return RootCount(int(g.size), "grid", g, int(roots.size) if ok else None, int(g.size), resid)


def count_roots_trig(poly: TrigPoly, level: float = 0.0, method: str = "auto") -> int:
    """Exact number of solutions of X(t) = level on [0, 2 pi)."""
    return count_roots_detail(poly, level, method=method).count


def expected_roots_trig(N: int, y: float = 0.0) -> float:
    """E[# roots of X_N = y on [0, 2 pi)] = (2/sqrt 3) sqrt((N+1)(2N+1)/2) e^{-y^2/2}."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return 2 / math.sqrt(3) * math.sqrt((N + 1) * (2 * N + 1) / 2) * math.exp(-y * y / 2)


def trig_covariance(N: int, t) -> np.ndarray:
    """r(t) = (1/N) sum_{n<=N} cos(nt)."""
    t = np.asarray(t, dtype=float)
    return np.cos(np.multiply.outer(t, np.arange(1, N + 1))).mean(axis=-1)


def scaled_trig_covariance(N: int, t) -> np.ndarray:
    """Covariance of Y_N(t) = X_N(t/N), which tends to sin t / t."""
    return trig_covariance(N, np.asarray(t, dtype=float) / N)


@dataclass(frozen=True)
class SincVarianceResult:
    value: float
    centering: float
    integral: float
    tail_bound: float
    tau_max: float
    candidates: dict
    decay_at_cutoff: float


def _sinc_conditional_term(tau: np.ndarray) -> np.ndarray:
    """E[|X'(0) X'(tau)| | X(0)=X(tau)=0] / sqrt(1 - r(tau)^2) for r = sinc."""
    model = SincCovariance()
    q = regression_quantities(model, tau, 0.0)
    r = model(tau, 0)
    return q.sigma2 * abs_product(np.zeros_like(tau), q.rho) / np.sqrt((1 - r) * (1 + r))


def sinc_limit_variance(tau_max: float = 1e4, nodes: int = 24, decay_tol: float = 1e-6) -> SincVarianceResult:
    """lim Var(N)/N for roots of X_N at level 0.

    The constant is 2/sqrt(3) + 2 int_0^inf (g(tau) - c) dtau with g the
    conditional term above. The centering c is chosen among the candidates
    2 lambda_2/pi and lambda_2/pi as the one for which g - c has decayed
    below ``decay_tol`` near the cutoff.
    """
    lam2 = 1.0 / 3.0
    candidates = {"2*lambda2/pi": 2 * lam2 / math.pi, "lambda2/pi": lam2 / math.pi}
    x, w = np.polynomial.legendre.leggauss(nodes)
    # pi-length chunks; the first chunk is split further near the origin
    edges = np.concatenate([[0.0, 0.05, 0.2, 0.6, 1.5], np.arange(1, int(tau_max / np.pi) + 1) * np.pi])
    edges = np.unique(np.concatenate([edges[edges < tau_max], [tau_max]]))
    lo, hi = edges[:-1], edges[1:]
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    tau = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    g = _sinc_conditional_term(tau).reshape(lo.size, nodes)
    tail_g = g[-10:].ravel()
    report = {}
    chosen = None
    for name, c in candidates.items():
        dec = float(np.max(np.abs(tail_g - c)))
        report[name] = {"centering": c, "decay_at_cutoff": dec}
        if dec < decay_tol and chosen is None:
            chosen = name
    if chosen is None:
        raise ArithmeticError(f"centering constant inconsistent: {report}")
    c = candidates[chosen]
    chunk = np.sum((g - c) * w[None, :], axis=1) * half
    integral = float(np.sum(chunk))
    # beyond the cutoff the centered term behaves like K/tau^2; bound via the last chunks
    tt = tau.reshape(lo.size, nodes)[-10:]
    K = float(np.max(np.abs(g[-10:] - c) * tt**2))
    tail = K / tau_max
    value = 2 / math.sqrt(3) + 2 * integral
    return SincVarianceResult(value, c, integral, 2 * tail, tau_max, report, report[chosen]["decay_at_cutoff"])
