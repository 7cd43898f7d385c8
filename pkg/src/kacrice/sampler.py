"""Gaussian path and field simulation on uniform grids, plus kernel smoothing.

1-D paths and 2-D isotropic fields with a covariance model are produced by
circulant embedding; random-wave fields by direct synthesis of plane waves.
Derivatives always come from the synthesis (spectral or analytic), never
from finite differences of the sampled values.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate, linalg, signal

from .gaussian_core import CovarianceModel
from .rng import make_rng

_MAGIC = b"KRGS"
_MAX_EMBED = 1 << 24


@dataclass(frozen=True)
class GridSample:
    """A realised path (1-D) or field (2-D) on a uniform grid.

    For 2-D samples ``values[i, j]`` sits at ``x = origin[0] + j h``,
    ``y = origin[1] + i h``. ``derivatives`` holds dX/dt for paths and
    (dX/dx, dX/dy) for fields when the simulator provides them.
    """

    values: np.ndarray
    h: float
    origin: tuple = (0.0,)
    seed: int = 0
    model_id: str = ""
    eps: float = 0.0
    derivatives: Optional[tuple] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim not in (1, 2) or min(v.shape) < 2:
            raise ValueError("values need at least 2 points per axis")
        if not self.h > 0:
            raise ValueError("spacing h must be positive")
        object.__setattr__(self, "values", v)
        if len(self.origin) != v.ndim:
            object.__setattr__(self, "origin", tuple(float(o) for o in (tuple(self.origin) + (0.0,) * v.ndim)[: v.ndim]))

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def coords(self, axis: int = 0) -> np.ndarray:
        """Physical coordinates along x (axis 0) or y (axis 1)."""
        if self.ndim == 1:
            return self.origin[0] + self.h * np.arange(self.values.size)
        n = self.shape[1] if axis == 0 else self.shape[0]
        return self.origin[axis] + self.h * np.arange(n)

    def with_values(self, values, **changes) -> "GridSample":
        return replace(self, values=np.asarray(values, dtype=float), **changes)

    # serialisation -----------------------------------------------------

    def to_bytes(self) -> bytes:
        mid = self.model_id.encode()
        head = struct.pack("<4sII", _MAGIC, 1, self.ndim)
        head += struct.pack(f"<{self.ndim}Q", *self.shape)
        head += struct.pack("<dd", self.h, self.eps)
        head += struct.pack(f"<{self.ndim}d", *self.origin)
        head += struct.pack("<QI", self.seed & (2**64 - 1), len(mid)) + mid
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "GridSample":
        magic, version, ndim = struct.unpack_from("<4sII", data, 0)
        if magic != _MAGIC or version != 1:
            raise ValueError("not a grid sample buffer")
        off = 12
        shape = struct.unpack_from(f"<{ndim}Q", data, off)
        off += 8 * ndim
        h, eps = struct.unpack_from("<dd", data, off)
        off += 16
        origin = struct.unpack_from(f"<{ndim}d", data, off)
        off += 8 * ndim
        seed, nid = struct.unpack_from("<QI", data, off)
        off += 12
        mid = data[off : off + nid].decode()
        off += nid
        vals = np.frombuffer(data, dtype="<f8", count=int(np.prod(shape)), offset=off).reshape(shape)
        return cls(vals.copy(), h, tuple(origin), seed, mid, eps)

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.ndim == 1:
            buf.write("t,value\n")
            for t, v in zip(self.coords(), self.values):
                buf.write(f"{t!r},{v!r}\n")
        else:
            xs, ys = self.coords(0), self.coords(1)
            buf.write("x,y,value\n")
            for i, y in enumerate(ys):
                for j, x in enumerate(xs):
                    buf.write(f"{x!r},{y!r},{self.values[i, j]!r}\n")
        return buf.getvalue()


# ---------------------------------------------------------------------------
# circulant embedding


@dataclass(frozen=True)
class Embedding:
    sqrt_eig: np.ndarray
    shape: tuple
    clipped: float
    padding: int


def _circulant_eigs(model: CovarianceModel, m: tuple, h: float) -> np.ndarray:
    if len(m) == 1:
        M = 2 * (m[0] - 1)
        k = np.arange(M)
        lag = np.minimum(k, M - k) * h
        return np.fft.fft(np.asarray(model.evaluate(lag))).real
    My, Mx = 2 * (m[0] - 1), 2 * (m[1] - 1)
    iy, ix = np.arange(My), np.arange(Mx)
    dy = np.minimum(iy, My - iy) * h
    dx = np.minimum(ix, Mx - ix) * h
    lag = np.hypot(dy[:, None], dx[None, :])
    return np.fft.fft2(np.asarray(model.evaluate(lag))).real


@lru_cache(maxsize=16)
def circulant_embedding(model: CovarianceModel, shape: tuple, h: float) -> Embedding:
    """Nonnegative-definite circulant extension of the covariance on a grid.

    Padding doubles until the smallest eigenvalue is above -1e-9 times the
    largest, up to 16 times the grid; remaining tiny negatives are clipped.
    """
    if not model.simulable:
        raise ValueError(f"model {model.model_id} cannot be simulated")
    pad = 1
    while True:
        m = tuple(max(2, n * pad) for n in shape)
        if np.prod([2 * (k - 1) for k in m]) > _MAX_EMBED:
            raise ValueError("embedding failed: embedding grid too large")
        lam = _circulant_eigs(model, m, h)
        top = lam.max()
        low = lam.min()
        if low >= -1e-9 * top:
            clipped = float(-low) if low < 0 else 0.0
            lam = np.clip(lam, 0.0, None)
            return Embedding(np.sqrt(lam / lam.size), lam.shape, clipped, pad)
        pad *= 2
        if pad > 16:
            raise ValueError(f"embedding failed: min eigenvalue {low:.3g} after 16x padding")


def _signed_freq(M: int, h: float) -> np.ndarray:
    w = 2 * np.pi * np.fft.fftfreq(M, d=h)
    if M % 2 == 0:
        w[M // 2] = 0.0
    return w


def simulate_stationary_1d(
    model: CovarianceModel,
    n: int,
    h: float,
    seed: int,
    with_derivative: bool = True,
    method: str = "auto",
) -> GridSample:
    """Zero-mean stationary Gaussian path X(0), X(h), ..., X((n-1)h).

    ``method`` is "circulant", "cholesky" (dense, n <= 4096) or "auto"
    (circulant with a dense fallback when embedding fails).
    """
    if n < 2 or not h > 0:
        raise ValueError("need n >= 2 and h > 0")
    rng = make_rng(seed)
    if method in ("auto", "circulant"):
        try:
            emb = circulant_embedding(model, (int(n),), float(h))
        except ValueError:
            if method == "circulant" or n > 4096:
                raise
        else:
            M = emb.shape[0]
            z = rng.standard_normal(M) + 1j * rng.standard_normal(M)
            coef = emb.sqrt_eig * z
            x = np.fft.fft(coef)[:n].real
            deriv = None
            if with_derivative:
                deriv = (np.fft.fft(-1j * _signed_freq(M, h) * coef)[:n].real,)
            return GridSample(x, h, (0.0,), seed, model.model_id, 0.0, deriv)
    return _simulate_dense(model, n, h, seed, rng, with_derivative)


def _simulate_dense(model, n, h, seed, rng, with_derivative):
    t = np.arange(n) * h
    lag = t[None, :] - t[:, None]
    if with_derivative:
        c00 = model.evaluate(lag, 0)
        c01 = model.evaluate(lag, 1)
        c11 = -np.asarray(model.evaluate(lag, 2))
        C = np.block([[c00, c01], [c01.T, c11]])
    else:
        C = np.asarray(model.evaluate(lag, 0))
    jitter = 1e-12 * np.trace(C) / C.shape[0]
    L = linalg.cholesky(C + jitter * np.eye(C.shape[0]), lower=True)
    y = L @ rng.standard_normal(C.shape[0])
    deriv = (y[n:],) if with_derivative else None
    return GridSample(y[:n], h, (0.0,), seed, model.model_id, 0.0, deriv)


# ---------------------------------------------------------------------------
# 2-D fields


@dataclass(frozen=True)
class RandomWaveSpec:
    """Superposition of M plane waves with wavenumber k0.

    ``amplitudes="gaussian"`` with ``directions="stratified"`` gives an exactly
    Gaussian stationary field with gradient covariance (k0^2/2) I;
    ``amplitudes="unit"`` with ``directions="uniform"`` is the classical
    random-phase construction sqrt(2/M) sum cos(<x,k_m> + phi_m).
    """

    k0: float
    waves: int = 256
    amplitudes: str = "gaussian"
    directions: str = "stratified"

    def __post_init__(self):
        if self.waves < 32:
            raise ValueError("too few waves for Gaussianity (need M >= 32)")
        if not self.k0 > 0:
            raise ValueError("k0 must be positive")
        if self.amplitudes not in ("gaussian", "unit") or self.directions not in ("stratified", "uniform"):
            raise ValueError("unknown random-wave options")

    @property
    def lambda2(self) -> float:
        return 0.5 * self.k0**2

    @property
    def model_id(self) -> str:
        return f"random-wave(k0={self.k0:g},M={self.waves})"


def _wave_synthesis(spec: RandomWaveSpec, shape, h, origin, rng, with_gradient):
    M = spec.waves
    if spec.directions == "stratified":
        theta = (rng.uniform() + np.arange(M)) * np.pi / M
    else:
        theta = rng.uniform(0.0, 2 * np.pi, M)
    if spec.amplitudes == "gaussian":
        c = (rng.standard_normal(M) - 1j * rng.standard_normal(M)) / math.sqrt(M)
    else:
        c = math.sqrt(2.0 / M) * np.exp(1j * rng.uniform(0.0, 2 * np.pi, M))
    kx, ky = spec.k0 * np.cos(theta), spec.k0 * np.sin(theta)
    x = origin[0] + h * np.arange(shape[1])
    y = origin[1] + h * np.arange(shape[0])
    Ex = np.exp(1j * np.outer(x, kx))
    Ey = np.exp(1j * np.outer(y, ky))
    vals = ((Ey * c) @ Ex.T).real
    grad = None
    if with_gradient:
        gx = ((Ey * (1j * kx * c)) @ Ex.T).real
        gy = ((Ey * (1j * ky * c)) @ Ex.T).real
        grad = (gx, gy)
    return vals, grad


def simulate_isotropic_2d(spec, shape: tuple, h: float, seed: int, origin=(0.0, 0.0), with_gradient: bool = False):
    """Zero-mean isotropic field on an ``shape = (ny, nx)`` grid.

    ``spec`` is a :class:`RandomWaveSpec` or an isotropic
    :class:`CovarianceModel` (radial profile, simulated by 2-D circulant
    embedding with spectral gradients).
    """
    shape = (int(shape[0]), int(shape[1]))
    if min(shape) < 2 or not h > 0:
        raise ValueError("grid needs >= 2 points per axis and h > 0")
    rng = make_rng(seed)
    if isinstance(spec, RandomWaveSpec):
        vals, grad = _wave_synthesis(spec, shape, h, origin, rng, with_gradient)
        return GridSample(vals, h, tuple(origin), seed, spec.model_id, 0.0, grad)
    if not isinstance(spec, CovarianceModel):
        raise TypeError("spec must be a RandomWaveSpec or a CovarianceModel")
    emb = circulant_embedding(spec, shape, float(h))
    My, Mx = emb.shape
    z = rng.standard_normal((My, Mx)) + 1j * rng.standard_normal((My, Mx))
    coef = emb.sqrt_eig * z
    vals = np.fft.fft2(coef)[: shape[0], : shape[1]].real
    grad = None
    if with_gradient:
        wy = _signed_freq(My, h)[:, None]
        wx = _signed_freq(Mx, h)[None, :]
        gx = np.fft.fft2(-1j * wx * coef)[: shape[0], : shape[1]].real
        gy = np.fft.fft2(-1j * wy * coef)[: shape[0], : shape[1]].real
        grad = (gx, gy)
    return GridSample(vals, h, tuple(origin), seed, spec.model_id, 0.0, grad)


# ---------------------------------------------------------------------------
# smoothing kernels


@dataclass(frozen=True)
class SmoothingKernel:
    """Radial kernel psi(x) = c_d (1 - |x|^2)^3 on the unit ball (C^2, mass 1)."""

    dim: int = 2
    support: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("kernel dimension must be 1 or 2")

    @property
    def constant(self) -> float:
        base = 35.0 / 32.0 if self.dim == 1 else 4.0 / math.pi
        return base / self.support**self.dim

    def profile(self, r):
        """psi as a function of the radius."""
        u = np.asarray(r, dtype=float) / self.support
        return np.where(u < 1, self.constant * (1 - u * u) ** 3, 0.0)

    def profile_derivative(self, r):
        u = np.asarray(r, dtype=float) / self.support
        return np.where(u < 1, -6 * self.constant * u * (1 - u * u) ** 2 / self.support, 0.0)

    def mass(self) -> float:
        s = self.support
        if self.dim == 1:
            return 2 * integrate.quad(lambda r: float(self.profile(r)), 0, s, epsabs=1e-14)[0]
        return 2 * np.pi * integrate.quad(lambda r: float(self.profile(r)) * r, 0, s, epsabs=1e-14)[0]

    def weights(self, eps: float, h: float) -> np.ndarray:
        """Discrete weights of psi_eps on the grid, renormalised to sum 1."""
        R = int(math.floor(self.support * eps / h))
        k = np.arange(-R, R + 1) * h
        if self.dim == 1:
            w = self.profile(np.abs(k) / eps)
        else:
            w = self.profile(np.hypot(k[:, None], k[None, :]) / eps)
        return w / w.sum()


def smooth_sample(sample: GridSample, kernel: SmoothingKernel, eps: float) -> GridSample:
    """X_eps = psi_eps * X on the interior of the grid ('valid' convolution).

    The output grid shrinks by the kernel radius on each side and its origin
    moves accordingly, so physical coordinates are preserved.
    """
    if kernel.dim != sample.ndim:
        raise ValueError("kernel and sample dimensions differ")
    if eps < 2 * sample.h:
        raise ValueError("kernel under-resolved: eps must be >= 2h")
    w = kernel.weights(eps, sample.h)
    R = (w.shape[0] - 1) // 2
    if any(n <= 2 * R + 1 for n in sample.shape):
        raise ValueError("grid too small for the kernel support")
    vals = signal.fftconvolve(sample.values, w, mode="valid")
    deriv = None
    if sample.derivatives is not None:
        deriv = tuple(signal.fftconvolve(d, w, mode="valid") for d in sample.derivatives)
    origin = tuple(o + R * sample.h for o in sample.origin)
    return replace(sample, values=vals, origin=origin, eps=float(eps), derivatives=deriv)


# ---------------------------------------------------------------------------
# smoothed covariance quantities


@lru_cache(maxsize=8)
def _autoconv_table(kernel: SmoothingKernel, n_rho: int = 257, n_quad: int = 96):
    """Phi = psi * psi and its radial derivative, tabulated on [0, 2 support]."""
    s = kernel.support
    rho = np.linspace(0.0, 2 * s, n_rho)
    xg, wg = np.polynomial.legendre.leggauss(n_quad)
    if kernel.dim == 1:
        v = s * xg
        wv = s * wg
        d = rho[:, None] - v[None, :]
        F = (kernel.profile(np.abs(v)) * kernel.profile(np.abs(d))) @ wv
        dF = (kernel.profile(np.abs(v)) * np.sign(d) * kernel.profile_derivative(np.abs(d))) @ wv
        return rho, F, dF
    # polar nodes over the unit disk for v
    r = 0.5 * s * (xg + 1)
    wr = 0.5 * s * wg
    th = np.pi * (xg + 1)
    wt = np.pi * wg
    R, T = np.meshgrid(r, th, indexing="ij")
    W = (wr[:, None] * wt[None, :] * R).ravel()
    vx, vy = (R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()
    pv = kernel.profile(np.hypot(vx, vy)) * W
    F = np.empty(n_rho)
    dF = np.empty(n_rho)
    for i, p in enumerate(rho):
        dx, dy = p - vx, -vy
        dist = np.hypot(dx, dy)
        F[i] = pv @ kernel.profile(dist)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(dist > 0, dx / dist, 0.0)
        dF[i] = pv @ (kernel.profile_derivative(dist) * unit)
    return rho, F, dF


def _autoconv(kernel, which):
    from scipy.interpolate import CubicSpline

    rho, F, dF = _autoconv_table(kernel)
    return CubicSpline(rho, F if which == 0 else dF)


def _radial_quad(func, upper, n=200):
    # Gauss-Legendre in u with rho = upper * u^2, absorbing endpoint power laws
    xg, wg = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (xg + 1)
    rho = upper * u * u
    return float(np.sum(0.5 * wg * func(rho) * 2 * upper * u))


def kernel_mu_epsilon(model: CovarianceModel, kernel: SmoothingKernel, eps: float, rtol: float = 1e-6) -> float:
    """Second spectral moment mu_eps of the smoothed field X_eps.

    Uses the radial form mu_eps = (pi/eps) int_0^2 Phi'(rho) r'(eps rho) rho
    drho (2-D), or (2/eps) int_0^2 Phi'(rho) r'(eps rho) drho (1-D); two
    quadrature orders are compared and a mismatch raises with the residual.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    dphi = _autoconv(kernel, 1)
    up = 2 * kernel.support
    if kernel.dim == 2:
        g = lambda rho: np.where(rho > 0, dphi(rho) * np.asarray(model.evaluate(np.maximum(eps * rho, 1e-300), 1)) * rho, 0.0)
        pref = math.pi / eps
    else:
        g = lambda rho: np.where(rho > 0, dphi(rho) * np.asarray(model.evaluate(np.maximum(eps * rho, 1e-300), 1)), 0.0)
        pref = 2.0 / eps
    a, b = _radial_quad(g, up, 200), _radial_quad(g, up, 400)
    if abs(a - b) > rtol * abs(b) + 1e-14:
        raise ValueError(f"quadrature non-convergence in mu_eps: residual {abs(a - b):.3g}")
    return pref * b


def smoothed_covariance(model: CovarianceModel, kernel: SmoothingKernel, eps: float, lag: float = 0.0) -> float:
    """r_eps(lag) = int Phi(w) r(|lag e_1 - eps w|) dw for the smoothed field."""
    phi = _autoconv(kernel, 0)
    up = 2 * kernel.support
    if lag == 0:
        if kernel.dim == 2:
            f = lambda rho: 2 * np.pi * phi(rho) * np.asarray(model.evaluate(eps * rho)) * rho
        else:
            f = lambda rho: 2 * phi(rho) * np.asarray(model.evaluate(eps * rho))
        return _radial_quad(f, up, 400)
    xg, wg = np.polynomial.legendre.leggauss(200)
    if kernel.dim == 1:
        v = up * xg
        return float(np.sum(up * wg * phi(np.abs(v)) * np.asarray(model.evaluate(lag - eps * v))))
    u = 0.5 * (xg + 1)
    rho = up * u * u
    wr = 0.5 * wg * 2 * up * u
    th = np.pi * (xg + 1)
    wt = np.pi * wg
    d = np.hypot(lag - eps * rho[:, None] * np.cos(th)[None, :], eps * rho[:, None] * np.sin(th)[None, :])
    vals = np.asarray(model.evaluate(d))
    return float(np.sum((wr * rho * phi(rho))[:, None] * wt[None, :] * vals))


def smoothed_variance_deficit(model: CovarianceModel, kernel: SmoothingKernel, eps: float) -> float:
    """r(0) - r_eps(0), computed from the stable one_minus_r of the model."""
    phi = _autoconv(kernel, 0)
    up = 2 * kernel.support
    if kernel.dim == 2:
        f = lambda rho: 2 * np.pi * phi(rho) * np.asarray(model.one_minus_r(eps * rho)) * rho
    else:
        f = lambda rho: 2 * phi(rho) * np.asarray(model.one_minus_r(eps * rho))
    return _radial_quad(f, up, 400)


def kernel_norm_moment(kernel: SmoothingKernel, power: float) -> float:
    """int Phi(w) |w|^power dw."""
    phi = _autoconv(kernel, 0)
    up = 2 * kernel.support
    if kernel.dim == 2:
        return _radial_quad(lambda rho: 2 * np.pi * phi(rho) * rho ** (power + 1), up, 400)
    return _radial_quad(lambda rho: 2 * phi(rho) * rho**power, up, 400)


def kernel_chi2(kernel: SmoothingKernel, alpha: float) -> float:
    """chi^2_d(alpha) = int d^2 Phi / dv_1^2 (v) |v|^(2 alpha) dv."""
    dphi = _autoconv(kernel, 1)
    up = 2 * kernel.support
    p = 2 * alpha
    if kernel.dim == 2:
        return -math.pi * _radial_quad(lambda rho: dphi(rho) * p * rho**p, up, 400)
    return -2 * _radial_quad(lambda rho: dphi(rho) * p * rho ** (p - 1), up, 400)


__all__ = [
    "GridSample",
    "Embedding",
    "circulant_embedding",
    "simulate_stationary_1d",
    "RandomWaveSpec",
    "simulate_isotropic_2d",
    "SmoothingKernel",
    "smooth_sample",
    "kernel_mu_epsilon",
    "smoothed_covariance",
    "smoothed_variance_deficit",
    "kernel_norm_moment",
    "kernel_chi2",
]
