"""B-spline / NURBS primitives used by the discretization.

Provides clamped knot vectors, basis evaluation with derivatives
(Cox-de Boor recurrence in the stable triangular form), Gauss-Legendre
quadrature helpers, rational curves and tensor-product rational surfaces,
and a discrete Coons constructor that fills a patch interior from its four
boundary curves in homogeneous coordinates.

All parametric domains are [0, 1] unless a knot vector says otherwise.
Control points are row-stacked ``(n, 2)`` arrays in meters.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import numpy.typing as npt

MAX_DEGREE = 4


def open_uniform_knots(degree: int, n_elements: int, a: float = 0.0, b: float = 1.0) -> np.ndarray:
    """Clamped (open) uniform knot vector with ``n_elements`` spans on [a, b].

    Parameters
    ----------
    degree : int
        Polynomial degree, 1..4.
    n_elements : int
        Number of non-empty knot spans, >= 1.
    a, b : float
        Parametric interval end points.

    Returns
    -------
    numpy.ndarray
        Knot array of length ``n_elements + 2 * degree + 1``.
    """
    if n_elements < 1:
        raise ValueError(f"n_elements must be >= 1, got {n_elements}")
    interior = np.linspace(a, b, n_elements + 1)
    return np.concatenate([np.full(degree, a), interior, np.full(degree, b)])


@dataclass(frozen=True)
class KnotVector:
    """Clamped knot vector with validation.

    Attributes
    ----------
    degree : int
        Polynomial degree, 1..4.
    knots : numpy.ndarray
        Non-decreasing knots; first and last knot repeated ``degree + 1``
        times (open/clamped form).
    """

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        if not 1 <= self.degree <= MAX_DEGREE:
            raise ValueError(f"degree must be in 1..{MAX_DEGREE}, got {self.degree}")
        k = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", k)
        if k.ndim != 1 or k.size < 2 * (self.degree + 1):
            raise ValueError("knot vector too short for degree")
        if np.any(np.diff(k) < 0):
            raise ValueError("knots must be non-decreasing")
        p = self.degree
        if not (np.all(k[: p + 1] == k[0]) and np.all(k[-p - 1 :] == k[-1])):
            raise ValueError("knot vector must be open/clamped (degree+1 end repeats)")
        if k[0] == k[-1]:
            raise ValueError("knot vector spans an empty interval")

    @property
    def n_basis(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct knot values (element boundaries)."""
        return np.unique(self.knots)

    def greville(self) -> np.ndarray:
        """Greville abscissae (knot averages), one per basis function."""
        p = self.degree
        return np.array([self.knots[i + 1 : i + p + 1].mean() for i in range(self.n_basis)])


def find_span(kv: KnotVector, u: float) -> int:
    """Index ``i`` with ``knots[i] <= u < knots[i+1]`` (last span at u_max)."""
    lo, hi = kv.domain
    if u < lo - 1e-12 or u > hi + 1e-12:
        raise ValueError(f"parameter {u} outside knot range [{lo}, {hi}]")
    u = min(max(u, lo), hi)
    k = kv.knots
    if u >= k[-1]:
        return int(np.searchsorted(k, k[-1], side="left") - 1)
    return int(np.searchsorted(k, u, side="right") - 1)


def eval_basis(kv: KnotVector, u: float, n_ders: int = 0) -> tuple[int, np.ndarray]:
    """Nonzero basis functions and derivatives at ``u``.

    Returns
    -------
    first : int
        Index of the first nonzero basis function (``span - degree``).
    ders : numpy.ndarray, shape ``(n_ders + 1, degree + 1)``
        ``ders[k, j]`` is the k-th derivative of basis function
        ``first + j`` at ``u``.
    """
    p = kv.degree
    span = find_span(kv, u)
    U = kv.knots
    lo, hi = kv.domain
    u = min(max(float(u), lo), hi)

    ndu = np.zeros((p + 1, p + 1))
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = u - U[span + 1 - j]
        right[j] = U[span + j] - u
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    nd = min(n_ders, p)
    ders = np.zeros((n_ders + 1, p + 1))
    ders[0, :] = ndu[:, p]
    a = np.zeros((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, nd + 1):
            d = 0.0
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    r = p
    for k in range(1, nd + 1):
        ders[k, :] *= r
        r *= p - k
    return span - p, ders


def tabulate(kv: KnotVector, us: npt.ArrayLike, n_ders: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate basis (and derivatives) at many parameters.

    Returns ``(first, ders)`` with ``first`` of shape ``(n,)`` and ``ders``
    of shape ``(n, n_ders + 1, degree + 1)``.
    """
    us = np.asarray(us, dtype=float).ravel()
    first = np.empty(us.size, dtype=np.int64)
    ders = np.empty((us.size, n_ders + 1, kv.degree + 1))
    for i, u in enumerate(us):
        f, d = eval_basis(kv, u, n_ders)
        first[i] = f
        ders[i] = d
    return first, ders


@lru_cache(maxsize=64)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    if n < 1:
        raise ValueError("need at least one quadrature point")
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def element_quadrature(kv: KnotVector, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss rule over all knot spans.

    Returns flat arrays of points and weights covering the knot domain,
    ``n_points`` Gauss points per non-empty span.
    """
    x, w = gauss_legendre(n_points)
    bp = kv.breakpoints
    pts, wts = [], []
    for a, b in zip(bp[:-1], bp[1:]):
        h = 0.5 * (b - a)
        pts.append(a + h * (x + 1.0))
        wts.append(h * w)
    return np.concatenate(pts), np.concatenate(wts)


# ---------------------------------------------------------------------------
# Rational curves and surfaces
# ---------------------------------------------------------------------------


@dataclass
class RationalCurve:
    """NURBS curve: control points ``(n, 2)`` with positive weights ``(n,)``."""

    kv: KnotVector
    ctrl: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.ctrl = np.asarray(self.ctrl, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.ctrl.shape != (self.kv.n_basis, 2):
            raise ValueError("control net size does not match knot vector")
        if self.weights.shape != (self.kv.n_basis,):
            raise ValueError("weight array size does not match knot vector")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")

    def homogeneous(self) -> np.ndarray:
        """Control net in homogeneous form ``(n, 3)`` = (w x, w y, w)."""
        h = np.empty((self.ctrl.shape[0], 3))
        h[:, :2] = self.ctrl * self.weights[:, None]
        h[:, 2] = self.weights
        return h

    def eval(self, u: float) -> np.ndarray:
        first, d = eval_basis(self.kv, u, 0)
        h = d[0] @ self.homogeneous()[first : first + self.kv.degree + 1]
        return h[:2] / h[2]

    def eval_many(self, us: npt.ArrayLike, n_ders: int = 1):
        """Points and first derivatives at many parameters.

        Returns ``(points (n,2), tangents (n,2))`` when ``n_ders >= 1``.
        """
        first, d = tabulate(self.kv, us, n_ders)
        H = self.homogeneous()
        p = self.kv.degree
        idx = first[:, None] + np.arange(p + 1)[None, :]
        Hl = H[idx]                                   # (n, p+1, 3)
        S = np.einsum("nkj,njc->nkc", d, Hl)          # (n, n_ders+1, 3)
        pts = S[:, 0, :2] / S[:, 0, 2:3]
        if n_ders == 0:
            return pts, None
        tan = (S[:, 1, :2] - pts * S[:, 1, 2:3]) / S[:, 0, 2:3]
        return pts, tan

    def reversed(self) -> "RationalCurve":
        k = self.kv.knots
        rk = k[0] + k[-1] - k[::-1]
        return RationalCurve(KnotVector(self.kv.degree, rk), self.ctrl[::-1].copy(), self.weights[::-1].copy())


def make_arc(radius: float, theta0: float, theta1: float, center=(0.0, 0.0)) -> RationalCurve:
    """Exact circular arc as a single rational quadratic Bezier segment.

    The swept angle must be below pi. Middle control point sits at the
    tangent intersection with weight ``cos(half_angle)``.
    """
    dth = theta1 - theta0
    if not 0 < abs(dth) < np.pi:
        raise ValueError("arc sweep must be in (0, pi)")
    tm = 0.5 * (theta0 + theta1)
    w1 = np.cos(0.5 * dth)
    c = np.asarray(center, dtype=float)
    p0 = c + radius * np.array([np.cos(theta0), np.sin(theta0)])
    p1 = c + (radius / w1) * np.array([np.cos(tm), np.sin(tm)])
    p2 = c + radius * np.array([np.cos(theta1), np.sin(theta1)])
    kv = KnotVector(2, np.array([0.0, 0, 0, 1, 1, 1]))
    return RationalCurve(kv, np.vstack([p0, p1, p2]), np.array([1.0, w1, 1.0]))


def make_line(p0, p1, degree: int = 2) -> RationalCurve:
    """Straight segment as a (degree-elevated) Bezier curve, unit weights."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    t = np.linspace(0.0, 1.0, degree + 1)[:, None]
    kv = KnotVector(degree, np.concatenate([np.zeros(degree + 1), np.ones(degree + 1)]))
    return RationalCurve(kv, (1 - t) * p0 + t * p1, np.ones(degree + 1))


@dataclass
class SplineSurface:
    """Tensor-product NURBS surface.

    Attributes
    ----------
    kv_u, kv_v : KnotVector
        Knot vectors per parametric direction.
    ctrl : numpy.ndarray, shape ``(nu, nv, 2)``
        Control points, u-index first.
    weights : numpy.ndarray, shape ``(nu, nv)``
        Rational weights (all ones for a polynomial patch).
    """

    kv_u: KnotVector
    kv_v: KnotVector
    ctrl: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.ctrl = np.asarray(self.ctrl, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        nu, nv = self.kv_u.n_basis, self.kv_v.n_basis
        if self.ctrl.shape != (nu, nv, 2):
            raise ValueError(f"control net shape {self.ctrl.shape} != {(nu, nv, 2)}")
        if self.weights.shape != (nu, nv):
            raise ValueError("weight net shape mismatch")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")

    def homogeneous(self) -> np.ndarray:
        h = np.empty(self.ctrl.shape[:2] + (3,))
        h[..., :2] = self.ctrl * self.weights[..., None]
        h[..., 2] = self.weights
        return h

    def eval(self, u: float, v: float) -> np.ndarray:
        pts, _ = self.eval_many([u], [v])
        return pts[0]

    def jacobian(self, u: float, v: float) -> np.ndarray:
        _, jac = self.eval_many([u], [v])
        return jac[0]

    def eval_many(self, us: npt.ArrayLike, vs: npt.ArrayLike):
        """Evaluate points and Jacobians at paired parameters.

        ``us`` and ``vs`` are same-length flat arrays; returns
        ``(points (n, 2), jacobians (n, 2, 2))`` where ``jac[:, :, 0]`` is
        the u-derivative column.
        """
        us = np.asarray(us, dtype=float).ravel()
        vs = np.asarray(vs, dtype=float).ravel()
        if us.size != vs.size:
            raise ValueError("us and vs must pair up")
        fu, du = tabulate(self.kv_u, us, 1)
        fv, dv = tabulate(self.kv_v, vs, 1)
        pu, pv = self.kv_u.degree, self.kv_v.degree
        H = self.homogeneous()
        iu = fu[:, None] + np.arange(pu + 1)[None, :]
        iv = fv[:, None] + np.arange(pv + 1)[None, :]
        Hl = H[iu[:, :, None], iv[:, None, :]]        # (n, pu+1, pv+1, 3)
        S = np.einsum("nka,nlb,nabc->nklc", du, dv, Hl)  # (n, 2, 2, 3)
        w = S[:, 0, 0, 2]
        pts = S[:, 0, 0, :2] / w[:, None]
        dxu = (S[:, 1, 0, :2] - pts * S[:, 1, 0, 2:3]) / w[:, None]
        dxv = (S[:, 0, 1, :2] - pts * S[:, 0, 1, 2:3]) / w[:, None]
        jac = np.stack([dxu, dxv], axis=-1)
        return pts, jac


def coons_patch(bottom: RationalCurve, top: RationalCurve, left: RationalCurve, right: RationalCurve) -> SplineSurface:
    """Fill a patch interior from four boundary curves (discrete Coons).

    ``bottom``/``top`` run in the u direction (v = 0 / v = 1), ``left`` /
    ``right`` in the v direction (u = 0 / u = 1).  Opposite curves must share
    knot vectors; corners must match.  Blending happens on homogeneous
    coordinates so rational boundaries stay exact.
    """
    if not np.array_equal(bottom.kv.knots, top.kv.knots) or bottom.kv.degree != top.kv.degree:
        raise ValueError("bottom/top knot vectors differ")
    if not np.array_equal(left.kv.knots, right.kv.knots) or left.kv.degree != right.kv.degree:
        raise ValueError("left/right knot vectors differ")
    for a, b, name in (
        (bottom.eval(0.0), left.eval(0.0), "bottom-left"),
        (bottom.eval(1.0), right.eval(0.0), "bottom-right"),
        (top.eval(0.0), left.eval(1.0), "top-left"),
        (top.eval(1.0), right.eval(1.0), "top-right"),
    ):
        if not np.allclose(a, b, atol=1e-9):
            raise ValueError(f"corner mismatch at {name}: {a} vs {b}")

    B, T = bottom.homogeneous(), top.homogeneous()
    L, R = left.homogeneous(), right.homogeneous()
    s = bottom.kv.greville()
    t = left.kv.greville()
    nu, nv = s.size, t.size
    H = np.zeros((nu, nv, 3))
    for i in range(nu):
        for j in range(nv):
            ruled_v = (1 - t[j]) * B[i] + t[j] * T[i]
            ruled_u = (1 - s[i]) * L[j] + s[i] * R[j]
            bilin = (
                (1 - s[i]) * (1 - t[j]) * B[0]
                + s[i] * (1 - t[j]) * B[-1]
                + (1 - s[i]) * t[j] * T[0]
                + s[i] * t[j] * T[-1]
            )
            H[i, j] = ruled_v + ruled_u - bilin
    w = H[..., 2]
    ctrl = H[..., :2] / w[..., None]
    return SplineSurface(bottom.kv, left.kv, ctrl, w)
