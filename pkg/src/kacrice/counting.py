"""Level-set estimators computed from realised samples.

Crossing counts and the Kac counter for paths; contour length, joint zeros,
occupation local time and the smoothed-length estimator for 2-D fields.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .gaussian_core import halfnorm_constant
from .sampler import GridSample, SmoothingKernel, kernel_mu_epsilon, smooth_sample

Weight = Union[None, float, Callable, np.ndarray]


class UnderResolvedWindow(UserWarning):
    """The Kac counter window is too narrow for the grid spacing."""


@dataclass(frozen=True)
class CrossingCount:
    count: int
    refined: bool
    grid_id: str = ""
    touches: int = 0
    sign_changes: int = 0


@dataclass(frozen=True)
class LevelCurveLength:
    length: float
    level: float
    cells_visited: int


@dataclass(frozen=True)
class LocalTimeEstimate:
    value: float
    level: float
    delta: float
    area: float


def _grid_id(sample: GridSample) -> str:
    return f"{sample.model_id}:n={'x'.join(map(str, sample.shape))}:h={sample.h:g}:seed={sample.seed}"


def _fd_derivative(values: np.ndarray, h: float) -> np.ndarray:
    # fourth-order central differences, second-order at the two edge points
    if values.size < 3:
        return np.full(values.shape, (values[-1] - values[0]) / (h * (values.size - 1)))
    d = np.gradient(values, h, edge_order=2)
    if values.size >= 5:
        d[2:-2] = (-values[4:] + 8 * values[3:-1] - 8 * values[1:-3] + values[:-4]) / (12 * h)
    return d


def _cubic_root_counts(d0, d1, m0, m1) -> np.ndarray:
    """Roots in [0, 1) of the cubic Hermite interpolant on each cell.

    Sign classes use the +0 convention (p >= 0 is positive); the count is the
    number of class changes between consecutive monotone pieces, which is
    exact for the cubic.
    """
    a = d0
    b = m0
    c = -3 * d0 - 2 * m0 + 3 * d1 - m1
    e = 2 * d0 + m0 - 2 * d1 + m1
    n = d0.size
    # critical points of p: b + 2 c t + 3 e t^2 = 0
    A, B, C = 3 * e, 2 * c, b
    crit = np.full((n, 2), np.nan)
    quad = np.abs(A) > 1e-14 * (np.abs(B) + np.abs(C) + 1e-300)
    disc = B * B - 4 * A * C
    ok = quad & (disc > 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        crit[ok, 0] = ((-B - sq) / (2 * A))[ok]
        crit[ok, 1] = ((-B + sq) / (2 * A))[ok]
        lin = ~quad & (np.abs(B) > 0)
        crit[lin, 0] = (-C / B)[lin]
    crit = np.where((crit > 0) & (crit < 1), crit, np.nan)
    crit.sort(axis=1)
    pts = np.column_stack([np.zeros(n), crit, np.ones(n)])
    # push nan to evaluate as duplicates of neighbours
    pts = np.where(np.isnan(pts), 0.0, pts)
    pts.sort(axis=1)
    vals = a[:, None] + pts * (b[:, None] + pts * (c[:, None] + pts * e[:, None]))
    vals[:, 0] = d0
    vals[:, -1] = d1
    cls = vals >= 0
    return np.sum(cls[:, 1:] != cls[:, :-1], axis=1)


def count_crossings_1d(sample: GridSample, level: float = 0.0, refine: bool = False) -> CrossingCount:
    """Number of crossings of ``level`` by a sampled path.

    Without refinement this is the number of sign changes of values - level
    (exact zeros count as positive). With refinement each cell is replaced by
    the cubic Hermite interpolant built from the sample derivatives (or
    fourth-order differences), so that a pair of crossings inside one cell is
    also counted.
    """
    v = np.asarray(sample.values, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise ValueError("need a 1-D sample with >= 2 points")
    d = v - level
    cls = d >= 0
    changes = int(np.sum(cls[1:] != cls[:-1]))
    touches = int(np.sum(d == 0))
    if not refine:
        return CrossingCount(changes, False, _grid_id(sample), touches, changes)
    if sample.derivatives is not None:
        dv = np.asarray(sample.derivatives[0], dtype=float)
    else:
        dv = _fd_derivative(v, sample.h)
    m = dv * sample.h
    per_cell = _cubic_root_counts(d[:-1], d[1:], m[:-1], m[1:])
    total = int(per_cell.sum())
    return CrossingCount(max(total, changes), True, _grid_id(sample), touches, changes)


def kac_counter_1d(sample: GridSample, level: float, delta: float) -> float:
    """(1/2 delta) int 1{|X - u| < delta} |X'| dt by the trapezoid rule."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    v = np.asarray(sample.values, dtype=float)
    if sample.derivatives is not None:
        dv = np.asarray(sample.derivatives[0], dtype=float)
    else:
        dv = _fd_derivative(v, sample.h)
    if delta < 5 * sample.h * float(np.max(np.abs(dv))):
        warnings.warn("under-resolved window", UnderResolvedWindow, stacklevel=2)
    g = np.where(np.abs(v - level) < delta, np.abs(dv), 0.0)
    return float(np.trapezoid(g, dx=sample.h) / (2 * delta))


# ---------------------------------------------------------------------------
# 2-D contours


def _weight_at(weight: Weight, sample: GridSample, x, y):
    if weight is None:
        return np.ones_like(x)
    if np.isscalar(weight):
        return np.full_like(x, float(weight))
    if callable(weight):
        return np.asarray(weight(x, y), dtype=float) * np.ones_like(x)
    w = np.asarray(weight, dtype=float)
    if w.shape != sample.shape:
        raise ValueError("weight grid must match the sample grid")
    # bilinear interpolation of the grid weight
    fx = (x - sample.origin[0]) / sample.h
    fy = (y - sample.origin[1]) / sample.h
    j = np.clip(np.floor(fx).astype(int), 0, sample.shape[1] - 2)
    i = np.clip(np.floor(fy).astype(int), 0, sample.shape[0] - 2)
    s, t = fx - j, fy - i
    return (
        w[i, j] * (1 - s) * (1 - t) + w[i, j + 1] * s * (1 - t) + w[i + 1, j] * (1 - s) * t + w[i + 1, j + 1] * s * t
    )


def contour_segments(values: np.ndarray, level: float, h: float = 1.0, origin=(0.0, 0.0)):
    """Marching-squares segments of {values = level} in physical coordinates.

    Returns an array of shape (S, 2, 2): S segments, two endpoints, (x, y).
    Saddle cells are split according to the sign of the cell average.
    """
    V = np.asarray(values, dtype=float) - level
    ny, nx = V.shape
    v00, v01 = V[:-1, :-1], V[:-1, 1:]
    v10, v11 = V[1:, :-1], V[1:, 1:]
    b00, b01, b10, b11 = v00 >= 0, v01 >= 0, v10 >= 0, v11 >= 0
    jj, ii = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1))

    def frac(a, b):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.clip(a / (a - b), 0.0, 1.0)

    # edge crossing points in cell units: bottom (y=0), right (x=1), top (y=1), left (x=0)
    edges = {
        "b": (b00 != b01, lambda: (frac(v00, v01), np.zeros_like(v00))),
        "r": (b01 != b11, lambda: (np.ones_like(v00), frac(v01, v11))),
        "t": (b10 != b11, lambda: (frac(v10, v11), np.ones_like(v00))),
        "l": (b00 != b10, lambda: (np.zeros_like(v00), frac(v00, v10))),
    }
    pts = {k: f() for k, (_, f) in edges.items()}
    has = {k: m for k, (m, _) in edges.items()}
    n_cross = has["b"].astype(int) + has["r"] + has["t"] + has["l"]
    saddle = n_cross == 4
    center_hi = (v00 + v01 + v10 + v11) >= 0
    same = center_hi == b00
    segs = []

    def emit(mask, e1, e2):
        if not np.any(mask):
            return
        p1x, p1y = pts[e1][0][mask], pts[e1][1][mask]
        p2x, p2y = pts[e2][0][mask], pts[e2][1][mask]
        cj, ci = jj[mask], ii[mask]
        seg = np.stack(
            [
                np.stack([cj + p1x, ci + p1y], axis=-1),
                np.stack([cj + p2x, ci + p2y], axis=-1),
            ],
            axis=1,
        )
        segs.append(seg)

    two = n_cross == 2
    names = ["b", "r", "t", "l"]
    for a in range(4):
        for b in range(a + 1, 4):
            ea, eb = names[a], names[b]
            emit(two & has[ea] & has[eb], ea, eb)
    emit(saddle & same, "b", "r")
    emit(saddle & same, "t", "l")
    emit(saddle & ~same, "b", "l")
    emit(saddle & ~same, "r", "t")
    if not segs:
        return np.zeros((0, 2, 2))
    out = np.concatenate(segs) * h
    out[..., 0] += origin[0]
    out[..., 1] += origin[1]
    return out


def level_curve_length_2d(sample: GridSample, level: float = 0.0, weight: Weight = None) -> LevelCurveLength:
    """Length of the level curve (optionally f-weighted at segment midpoints)."""
    if sample.ndim != 2:
        raise ValueError("need a 2-D sample")
    if min(sample.shape) < 16:
        raise ValueError("grid must be at least 16x16")
    segs = contour_segments(sample.values, level, sample.h, sample.origin)
    if segs.shape[0] == 0:
        return LevelCurveLength(0.0, float(level), 0)
    seglen = np.hypot(*(segs[:, 1] - segs[:, 0]).T)
    if weight is not None:
        mid = segs.mean(axis=1)
        seglen = seglen * _weight_at(weight, sample, mid[:, 0], mid[:, 1])
    V = sample.values >= level
    visited = int(np.sum((V[:-1, :-1] != V[:-1, 1:]) | (V[:-1, :-1] != V[1:, :-1]) | (V[:-1, :-1] != V[1:, 1:])))
    return LevelCurveLength(float(seglen.sum()), float(level), visited)


# ---------------------------------------------------------------------------
# joint zeros


def _bilinear_coeffs(V):
    v00, v01 = V[:-1, :-1], V[:-1, 1:]
    v10, v11 = V[1:, :-1], V[1:, 1:]
    return v00, v01 - v00, v10 - v00, v11 - v01 - v10 + v00


def joint_zeros_2d(xi: GridSample, eta: GridSample) -> np.ndarray:
    """Common zeros of the bilinear interpolants of two fields.

    Per candidate cell the system is reduced to a quadratic in the cell's
    y coordinate by eliminating x; each root is kept when it lies in the
    half-open unit cell, so zeros on shared edges are counted once.
    Returns physical coordinates, shape (Z, 2).
    """
    if xi.shape != eta.shape or xi.h != eta.h or tuple(xi.origin) != tuple(eta.origin):
        raise ValueError("fields must share a grid")
    if np.array_equal(xi.values, eta.values):
        raise ValueError("fields not independent: identical buffers")
    A, B = xi.values, eta.values

    def straddle(V):
        corners = np.stack([V[:-1, :-1], V[:-1, 1:], V[1:, :-1], V[1:, 1:]])
        return (corners.min(axis=0) <= 0) & (corners.max(axis=0) >= 0)

    cand = straddle(A) & straddle(B)
    ci, cj = np.nonzero(cand)
    if ci.size == 0:
        return np.zeros((0, 2))
    a0, a1, a2, a3 = (c[ci, cj] for c in _bilinear_coeffs(A))
    b0, b1, b2, b3 = (c[ci, cj] for c in _bilinear_coeffs(B))
    # xi = a0 + a1 s + a2 t + a3 s t, eta likewise; eliminate s
    q2 = b2 * a3 - b3 * a2
    q1 = b0 * a3 + b2 * a1 - b1 * a2 - b3 * a0
    q0 = b0 * a1 - b1 * a0
    scale = np.abs(q2) + np.abs(q1) + np.abs(q0) + 1e-300
    roots = np.full((ci.size, 2), np.nan)
    quad = np.abs(q2) > 1e-12 * scale
    disc = q1 * q1 - 4 * q2 * q0
    okq = quad & (disc >= 0)
    sq = np.sqrt(np.where(okq, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        # numerically stable quadratic roots
        qq = -0.5 * (q1 + np.copysign(sq, q1))
        r1 = qq / q2
        r2 = q0 / qq
        roots[okq, 0] = r1[okq]
        roots[okq, 1] = np.where(qq[okq] != 0, r2[okq], r1[okq])
        lin = ~quad & (np.abs(q1) > 1e-12 * scale)
        roots[lin, 0] = (-q0 / q1)[lin]
    found = []
    for k in range(2):
        t = roots[:, k]
        valid = (t >= 0) & (t < 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            den_a = a1 + a3 * t
            den_b = b1 + b3 * t
            use_a = np.abs(den_a) >= np.abs(den_b)
            s = np.where(use_a, -(a0 + a2 * t) / den_a, -(b0 + b2 * t) / den_b)
        valid &= (s >= 0) & (s < 1) & np.isfinite(s)
        if k == 1:
            valid &= ~(np.abs(roots[:, 1] - roots[:, 0]) < 1e-12)
        found.append(np.column_stack([cj[valid] + s[valid], ci[valid] + t[valid]]))
    pts = np.concatenate(found) * xi.h
    pts[:, 0] += xi.origin[0]
    pts[:, 1] += xi.origin[1]
    return pts


def count_joint_zeros_2d(xi: GridSample, eta: GridSample) -> int:
    """Number of common zeros of two fields on a shared grid."""
    return int(joint_zeros_2d(xi, eta).shape[0])


def count_joint_zeros_contour(xi: GridSample, eta: GridSample) -> int:
    """Alternative count: sign changes of eta along the zero contour of xi.

    eta is interpolated bilinearly at the contour segment endpoints. Agrees
    with :func:`count_joint_zeros_2d` whenever each contour segment meets the
    zero set of eta at most once.
    """
    if np.array_equal(xi.values, eta.values):
        raise ValueError("fields not independent: identical buffers")
    segs = contour_segments(xi.values, 0.0, xi.h, xi.origin)
    if segs.shape[0] == 0:
        return 0
    e1 = _weight_at(eta.values, eta, segs[:, 0, 0], segs[:, 0, 1])
    e2 = _weight_at(eta.values, eta, segs[:, 1, 0], segs[:, 1, 1])
    return int(np.sum((e1 >= 0) != (e2 >= 0)))


# ---------------------------------------------------------------------------
# local time


def region_mask(sample: GridSample, region=None) -> np.ndarray:
    """Boolean mask of grid points with x0 <= x < x1 (and y0 <= y < y1)."""
    if region is None:
        return np.ones(sample.shape, dtype=bool)
    if sample.ndim == 1:
        x = sample.coords()
        return (x >= region[0]) & (x < region[1])
    x, y = sample.coords(0), sample.coords(1)
    mx = (x >= region[0]) & (x < region[1])
    my = (y >= region[2]) & (y < region[3])
    return my[:, None] & mx[None, :]


def _weight_grid(weight: Weight, sample: GridSample) -> np.ndarray:
    if weight is None:
        return np.ones(sample.shape)
    if np.isscalar(weight):
        return np.full(sample.shape, float(weight))
    if callable(weight):
        if sample.ndim == 1:
            return np.asarray(weight(sample.coords()), dtype=float) * np.ones(sample.shape)
        X, Y = np.meshgrid(sample.coords(0), sample.coords(1))
        return np.asarray(weight(X, Y), dtype=float) * np.ones(sample.shape)
    w = np.asarray(weight, dtype=float)
    if w.shape != sample.shape:
        raise ValueError("weight grid must match the sample grid")
    return w


def occupation_local_time(
    sample: GridSample, level: float, delta: float, weight: Weight = None, region=None
) -> LocalTimeEstimate:
    """eta_delta(u) = (1/2 delta) sum f 1{u - delta <= X < u + delta} h^d.

    The window is half open so that windows tiling the level axis partition
    the grid points and the occupation identity holds exactly. The reported
    area is the discrete measure (number of points times h^d).
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    mask = region_mask(sample, region)
    v = sample.values[mask]
    f = _weight_grid(weight, sample)[mask]
    cell = sample.h**sample.ndim
    inside = (v >= level - delta) & (v < level + delta)
    val = float(np.sum(f[inside]) * cell / (2 * delta))
    return LocalTimeEstimate(val, float(level), float(delta), float(v.size * cell))


def _crop(sample: GridSample, region) -> GridSample:
    mask = region_mask(sample, region)
    rows = np.nonzero(mask.any(axis=1))[0]
    cols = np.nonzero(mask.any(axis=0))[0]
    if rows.size < 2 or cols.size < 2:
        raise ValueError("region does not cover the smoothed grid")
    sub = sample.values[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    origin = (sample.origin[0] + cols[0] * sample.h, sample.origin[1] + rows[0] * sample.h)
    return GridSample(sub, sample.h, origin, sample.seed, sample.model_id, sample.eps)


def smoothed_length_estimator(
    sample: GridSample,
    kernel: SmoothingKernel,
    eps: float,
    level: float = 0.0,
    weight: Weight = None,
    model=None,
    mu_eps: Optional[float] = None,
    region=None,
) -> float:
    """xi_eps(u) = theta_2^{-1} mu_eps^{-1/2} int_{X_eps = u} f dsigma.

    The field is smoothed in 'valid' mode (boundary points within the kernel
    support are dropped), optionally cropped to ``region``, contoured, and
    the f-weighted polyline length rescaled. ``mu_eps`` is computed from
    ``model`` when not given.
    """
    if sample.ndim != 2:
        raise ValueError("smoothed-length estimator needs a 2-D sample")
    if weight is not None and np.isscalar(weight) and float(weight) == 0.0:
        return 0.0
    if mu_eps is None:
        if model is None:
            raise ValueError("need model or mu_eps")
        mu_eps = kernel_mu_epsilon(model, kernel, eps)
    xs = smooth_sample(sample, kernel, eps)
    if region is not None:
        xs = _crop(xs, region)
    if weight is not None and not np.isscalar(weight) and not callable(weight):
        raise ValueError("grid weights are not supported after smoothing; pass a callable")
    length = level_curve_length_2d(xs, level, weight).length
    return length / (halfnorm_constant(2) * math.sqrt(mu_eps))


__all__ = [
    "CrossingCount",
    "LevelCurveLength",
    "LocalTimeEstimate",
    "UnderResolvedWindow",
    "count_crossings_1d",
    "kac_counter_1d",
    "contour_segments",
    "level_curve_length_2d",
    "joint_zeros_2d",
    "count_joint_zeros_2d",
    "count_joint_zeros_contour",
    "region_mask",
    "occupation_local_time",
    "smoothed_length_estimator",
]
