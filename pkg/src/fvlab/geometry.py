"""Simulation domains: containment, boundary distance, segment exits, bridges.

Every domain answers four queries:

* ``contains(x)``          -- strict interior membership (boundary counts out),
* ``dist_to_boundary(x)``  -- Euclidean distance to the boundary from inside,
* ``segment_exit(a, b)``   -- first boundary crossing of the segment a -> b,
* ``bounding_box()``       -- axis box enclosing the domain (bounded domains).

The ``*_many`` variants are the vectorised kernels the path engines run on;
they take ``(n, dim)`` arrays.  Scalar methods wrap them.  Domains are
immutable after construction and all queries are pure, so instances can be
shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .conemath import theta_pd

__all__ = [
    "GeometryError",
    "Domain",
    "Interval",
    "Box",
    "Ball",
    "Polygon2D",
    "Wedge2D",
    "Cone",
    "ExitQuery",
    "bridge_absorption_prob",
    "domain_from_dict",
]

_BOUNDARY_EPS = 1e-12


class GeometryError(ValueError):
    """Invalid domain construction or query (dimension mismatch, outside point)."""


@dataclass(frozen=True)
class ExitQuery:
    """A discrete step a -> b taken over Brownian time dt."""

    a: np.ndarray
    b: np.ndarray
    dt: float

    def __post_init__(self):
        if self.dt <= 0.0:
            raise GeometryError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, float)))
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, float)))


def _as_points(x, dim: int) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if pts.shape[1] != dim:
        raise GeometryError(f"point dimension {pts.shape[1]} != domain dimension {dim}")
    return pts


class Domain:
    """Base class; subclasses fill in the vectorised kernels."""

    dim: int

    # -- vectorised kernels, points as (n, dim) arrays -----------------------

    def contains_many(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dist_many(self, x: np.ndarray) -> np.ndarray:
        """Distance to the boundary; meaningful for interior points."""
        raise NotImplementedError

    def segment_exit_many(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """First crossing fraction of each segment, np.inf where none."""
        raise NotImplementedError

    # -- scalar API -----------------------------------------------------------

    def contains(self, x) -> bool:
        pts = _as_points(x, self.dim)
        if not bool(self.contains_many(pts)[0]):
            return False
        # Open set: points numerically on the boundary count as outside.
        return float(self.dist_many(pts)[0]) > _BOUNDARY_EPS

    def dist_to_boundary(self, x) -> float:
        pts = _as_points(x, self.dim)
        if not bool(self.contains_many(pts)[0]):
            raise GeometryError(f"point {np.asarray(x)} is not inside the domain")
        return float(self.dist_many(pts)[0])

    def segment_exit(self, a, b) -> Optional[Tuple[np.ndarray, float]]:
        pa = _as_points(a, self.dim)
        pb = _as_points(b, self.dim)
        if not bool(self.contains_many(pa)[0]):
            raise GeometryError("segment start must lie inside the domain")
        lam = float(self.segment_exit_many(pa, pb)[0])
        if not math.isfinite(lam):
            return None
        hit = pa[0] + lam * (pb[0] - pa[0])
        return hit, lam

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        raise GeometryError(f"{type(self).__name__} is unbounded")

    def deep_point(self) -> np.ndarray:
        """An interior point far from the boundary (default particle start)."""
        raise NotImplementedError


class Interval(Domain):
    """Open interval (a, b) on the line."""

    dim = 1

    def __init__(self, a: float, b: float):
        a, b = float(a), float(b)
        if not a < b:
            raise GeometryError(f"need a < b, got a={a}, b={b}")
        self.a = a
        self.b = b

    def __repr__(self):
        return f"Interval({self.a}, {self.b})"

    def contains_many(self, x):
        v = x[:, 0]
        return (v > self.a) & (v < self.b)

    def dist_many(self, x):
        v = x[:, 0]
        return np.minimum(v - self.a, self.b - v)

    def segment_exit_many(self, a, b):
        va, vb = a[:, 0], b[:, 0]
        dv = vb - va
        lam = np.full(va.shape, np.inf)
        lo = vb <= self.a
        np.divide(self.a - va, dv, out=lam, where=lo)
        lam_hi = np.full(va.shape, np.inf)
        hi = vb >= self.b
        np.divide(self.b - va, dv, out=lam_hi, where=hi)
        return np.minimum(lam, lam_hi)

    def segment_hit_fraction_many(self, a, b):
        # First fraction at which the segment touches the closed interval.
        va, vb = a[:, 0], b[:, 0]
        inside = (va >= self.a) & (va <= self.b)
        dv = vb - va
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lo = (self.a - va) / dv
            t_hi = (self.b - va) / dv
        t_enter = np.minimum(t_lo, t_hi)
        t_leave = np.maximum(t_lo, t_hi)
        ok = (t_enter <= 1.0) & (t_leave >= 0.0) & np.isfinite(t_enter)
        frac = np.where(ok, np.clip(t_enter, 0.0, 1.0), np.inf)
        return np.where(inside, 0.0, frac)

    # scalar conveniences return plain floats
    def segment_exit(self, a, b):
        res = super().segment_exit(a, b)
        if res is None:
            return None
        hit, lam = res
        return float(hit[0]), lam

    def bounding_box(self):
        return np.array([self.a]), np.array([self.b])

    def deep_point(self):
        return np.array([0.5 * (self.a + self.b)])


class Box(Domain):
    """Open axis-aligned box, lo < x < hi componentwise."""

    def __init__(self, lo, hi):
        lo = np.asarray(lo, float).ravel()
        hi = np.asarray(hi, float).ravel()
        if lo.shape != hi.shape or lo.size == 0:
            raise GeometryError("lo and hi must be vectors of equal length")
        if not np.all(lo < hi):
            raise GeometryError(f"need lo < hi componentwise, got lo={lo}, hi={hi}")
        self.lo = lo
        self.hi = hi
        self.dim = lo.size

    def __repr__(self):
        return f"Box({self.lo.tolist()}, {self.hi.tolist()})"

    def contains_many(self, x):
        return np.all((x > self.lo) & (x < self.hi), axis=1)

    def dist_many(self, x):
        return np.minimum(x - self.lo, self.hi - x).min(axis=1)

    def segment_exit_many(self, a, b):
        d = b - a
        with np.errstate(divide="ignore", invalid="ignore"):
            t_pos = (self.hi - a) / d
            t_neg = (self.lo - a) / d
        t = np.where(d > 0, t_pos, np.where(d < 0, t_neg, np.inf))
        lam = t.min(axis=1)
        return np.where(lam <= 1.0, lam, np.inf)

    def segment_hit_fraction_many(self, a, b):
        d = b - a
        with np.errstate(divide="ignore", invalid="ignore"):
            t0 = (self.lo - a) / d
            t1 = (self.hi - a) / d
        t_enter_ax = np.minimum(t0, t1)
        t_leave_ax = np.maximum(t0, t1)
        # Degenerate axes (d == 0): inside the slab iff coordinate in range.
        in_slab = (a >= self.lo) & (a <= self.hi)
        t_enter_ax = np.where(d == 0, np.where(in_slab, -np.inf, np.inf), t_enter_ax)
        t_leave_ax = np.where(d == 0, np.where(in_slab, np.inf, -np.inf), t_leave_ax)
        t_enter = t_enter_ax.max(axis=1)
        t_leave = t_leave_ax.min(axis=1)
        ok = (t_enter <= t_leave) & (t_enter <= 1.0) & (t_leave >= 0.0)
        return np.where(ok, np.clip(t_enter, 0.0, 1.0), np.inf)

    def bounding_box(self):
        return self.lo.copy(), self.hi.copy()

    def deep_point(self):
        return 0.5 * (self.lo + self.hi)


class Ball(Domain):
    """Open Euclidean ball."""

    def __init__(self, center, radius: float):
        center = np.asarray(center, float).ravel()
        radius = float(radius)
        if radius <= 0.0:
            raise GeometryError(f"radius must be positive, got {radius}")
        self.center = center
        self.radius = radius
        self.dim = center.size

    def __repr__(self):
        return f"Ball({self.center.tolist()}, {self.radius})"

    def contains_many(self, x):
        d2 = ((x - self.center) ** 2).sum(axis=1)
        return d2 < self.radius**2

    def dist_many(self, x):
        return self.radius - np.sqrt(((x - self.center) ** 2).sum(axis=1))

    def segment_exit_many(self, a, b):
        p = a - self.center
        d = b - a
        A = (d * d).sum(axis=1)
        B = 2.0 * (p * d).sum(axis=1)
        C = (p * p).sum(axis=1) - self.radius**2
        disc = B * B - 4.0 * A * C
        lam = np.full(A.shape, np.inf)
        ok = (A > 0) & (disc >= 0)
        root = np.sqrt(np.where(ok, disc, 0.0))
        # Interior start gives C < 0, so the positive root is the exit.
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (-B + root) / (2.0 * A)
        valid = ok & (t >= 0.0) & (t <= 1.0)
        lam[valid] = t[valid]
        return lam

    def segment_hit_fraction_many(self, a, b):
        p = a - self.center
        C = (p * p).sum(axis=1) - self.radius**2
        inside = C <= 0.0
        d = b - a
        A = (d * d).sum(axis=1)
        B = 2.0 * (p * d).sum(axis=1)
        disc = B * B - 4.0 * A * C
        frac = np.full(A.shape, np.inf)
        ok = (~inside) & (A > 0) & (disc >= 0)
        root = np.sqrt(np.where(ok, disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (-B - root) / (2.0 * A)  # first touch
        valid = ok & (t >= 0.0) & (t <= 1.0)
        frac[valid] = t[valid]
        frac[inside] = 0.0
        return frac

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def deep_point(self):
        return self.center.copy()


class Polygon2D(Domain):
    """Simple planar polygon given by its ordered vertices."""

    dim = 2

    def __init__(self, vertices):
        v = np.asarray(vertices, float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise GeometryError("vertices must be an (n>=3, 2) array")
        # Shoelace area: nondegenerate and gives orientation.
        x, y = v[:, 0], v[:, 1]
        area2 = float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
        if abs(area2) < 1e-14:
            raise GeometryError("polygon is degenerate (zero area)")
        self.vertices = v
        self._p0 = v
        self._p1 = np.roll(v, -1, axis=0)
        self._edge = self._p1 - self._p0
        self._edge_len2 = (self._edge**2).sum(axis=1)
        if self._edge_len2.min() < 1e-28:
            raise GeometryError("polygon has a zero-length edge")
        if not self._is_simple():
            raise GeometryError("polygon is self-intersecting")

    def __repr__(self):
        return f"Polygon2D({self.vertices.tolist()})"

    def _is_simple(self) -> bool:
        # Brute-force pairwise test on non-adjacent edges; polygons here are
        # small so O(n^2) is fine.
        n = self.vertices.shape[0]
        for i in range(n):
            a0, a1 = self._p0[i], self._p1[i]
            for j in range(i + 1, n):
                if j == i or (j + 1) % n == i or (i + 1) % n == j:
                    continue
                b0, b1 = self._p0[j], self._p1[j]
                if _segments_cross(a0, a1, b0, b1):
                    return False
        return True

    def contains_many(self, x):
        # Even-odd rule, ray towards +x, vectorised over points and edges.
        px = x[:, 0:1]
        py = x[:, 1:2]
        y0 = self._p0[None, :, 1]
        y1 = self._p1[None, :, 1]
        x0 = self._p0[None, :, 0]
        x1 = self._p1[None, :, 0]
        straddle = (y0 > py) != (y1 > py)
        dy = y1 - y0
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = x0 + (py - y0) * (x1 - x0) / np.where(dy == 0, 1.0, dy)
        crossings = (straddle & (px < xi)).sum(axis=1)
        return (crossings % 2).astype(bool)

    def dist_many(self, x):
        d = x[:, None, :] - self._p0[None, :, :]
        t = (d * self._edge[None, :, :]).sum(axis=2) / self._edge_len2[None, :]
        t = np.clip(t, 0.0, 1.0)
        proj = self._p0[None, :, :] + t[:, :, None] * self._edge[None, :, :]
        diff = x[:, None, :] - proj
        return np.sqrt((diff**2).sum(axis=2)).min(axis=1)

    def segment_exit_many(self, a, b):
        r = b - a
        e = self._edge
        # Solve a + t r = p0 + s e with cross products.
        cre = r[:, None, 0] * e[None, :, 1] - r[:, None, 1] * e[None, :, 0]
        q = self._p0[None, :, :] - a[:, None, :]
        t_num = q[:, :, 0] * e[None, :, 1] - q[:, :, 1] * e[None, :, 0]
        s_num = q[:, :, 0] * r[:, None, 1] - q[:, :, 1] * r[:, None, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = t_num / cre
            s = s_num / cre
        ok = (cre != 0) & (t >= 0.0) & (t <= 1.0) & (s >= 0.0) & (s <= 1.0)
        t = np.where(ok, t, np.inf)
        lam = t.min(axis=1)
        # A step that lands outside without a detected crossing (grazing a
        # vertex within rounding) is treated as exiting at its endpoint.
        missed = ~np.isfinite(lam) & ~self.contains_many(b)
        lam[missed] = 1.0
        return lam

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def deep_point(self):
        lo, hi = self.bounding_box()
        n = 41
        gx = np.linspace(lo[0], hi[0], n + 2)[1:-1]
        gy = np.linspace(lo[1], hi[1], n + 2)[1:-1]
        pts = np.stack(np.meshgrid(gx, gy), axis=-1).reshape(-1, 2)
        inside = self.contains_many(pts)
        if not inside.any():
            raise GeometryError("could not locate an interior point")
        pts = pts[inside]
        return pts[np.argmax(self.dist_many(pts))]


def _segments_cross(a0, a1, b0, b1) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    d1 = orient(a0, a1, b0)
    d2 = orient(a0, a1, b1)
    d3 = orient(b0, b1, a0)
    d4 = orient(b0, b1, a1)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    # Collinear overlaps also make the polygon non-simple.
    for p, q, r, dd in ((a0, a1, b0, d1), (a0, a1, b1, d2), (b0, b1, a0, d3), (b0, b1, a1, d4)):
        if dd == 0 and _on_segment(p, q, r):
            return True
    return False


def _on_segment(p, q, r) -> bool:
    return (
        min(p[0], q[0]) <= r[0] <= max(p[0], q[0])
        and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])
    )


class _CanonicalCone:
    """Shared math for the cone {y != 0 : angle(y, e_last) < theta} in R^d."""

    def __init__(self, dim: int, theta: float):
        if dim < 2:
            raise GeometryError(f"cone dimension must be >= 2, got {dim}")
        theta = float(theta)
        if not 0.0 < theta < math.pi:
            raise GeometryError(f"half-angle must lie in (0, pi), got {theta}")
        self.dim = dim
        self.theta = theta
        self.cos_t = math.cos(theta)
        self.sin_t = math.sin(theta)
        self._halfspace = abs(self.cos_t) < 1e-12

    def contains_many(self, y):
        z = y[:, -1]
        r = np.sqrt((y * y).sum(axis=1))
        return z > self.cos_t * r

    def dist_many(self, y):
        rho = np.sqrt((y[:, :-1] ** 2).sum(axis=1))
        z = y[:, -1]
        if self._halfspace:
            return z
        # Distance in the (rho, z) half-plane to the boundary ray of direction
        # (sin theta, cos theta); behind the apex, the apex is closest.
        along = rho * self.sin_t + z * self.cos_t
        perp = np.abs(z * self.sin_t - rho * self.cos_t)
        r = np.sqrt(rho * rho + z * z)
        return np.where(along >= 0.0, perp, r)

    def segment_exit_many(self, a, b):
        d = b - a
        za, dz = a[:, -1], d[:, -1]
        if self._halfspace:
            lam = np.full(za.shape, np.inf)
            down = (b[:, -1] <= 0.0) & (dz != 0.0)
            np.divide(-za, dz, out=lam, where=down)
            return lam
        c2 = self.cos_t**2
        s2 = self.sin_t**2
        ra2 = (a[:, :-1] ** 2).sum(axis=1)
        rd2 = (d[:, :-1] ** 2).sum(axis=1)
        rad = (a[:, :-1] * d[:, :-1]).sum(axis=1)
        # f(t) = z(t)^2 - cos^2 * |y(t)|^2 vanishes on the double cone.
        A = s2 * dz * dz - c2 * rd2
        B = 2.0 * (s2 * za * dz - c2 * rad)
        C = s2 * za * za - c2 * ra2
        return _first_valid_root(A, B, C, za, dz, self.cos_t, a, d)


def _first_valid_root(A, B, C, za, dz, cos_t, a, d):
    n = A.shape[0]
    lam = np.full(n, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        # Linear fallback where the quadratic degenerates.
        t_lin = np.where((np.abs(A) < 1e-300) & (B != 0.0), -C / B, np.inf)
        disc = B * B - 4.0 * A * C
        sq = np.sqrt(np.maximum(disc, 0.0))
        qq = -0.5 * (B + np.sign(B) * sq)
        qq = np.where(qq == 0.0, np.where(B >= 0, -0.5 * (B + sq), -0.5 * (B - sq)), qq)
        t1 = np.where(np.abs(A) >= 1e-300, qq / A, t_lin)
        t2 = np.where((np.abs(A) >= 1e-300) & (qq != 0.0), C / qq, np.inf)
    have_disc = (disc >= 0.0) | (np.abs(A) < 1e-300)
    for t in (t1, t2):
        zt = za + t * dz
        # Valid boundary points sit on the nappe whose axis-coordinate sign
        # matches cos(theta); the mirror cone is not a boundary.
        valid = have_disc & np.isfinite(t) & (t > 1e-14) & (t <= 1.0) & (zt * cos_t >= -1e-12)
        lam = np.where(valid & (t < lam), t, lam)
    return lam


class Wedge2D(Domain):
    """Planar wedge: points within half_angle of the axis direction from vertex."""

    dim = 2

    def __init__(self, vertex, axis, half_angle: float):
        vertex = np.asarray(vertex, float).ravel()
        axis = np.asarray(axis, float).ravel()
        if vertex.size != 2 or axis.size != 2:
            raise GeometryError("vertex and axis must be 2-vectors")
        norm = float(np.hypot(axis[0], axis[1]))
        if norm < 1e-300:
            raise GeometryError("axis must be a nonzero vector")
        axis = axis / norm
        self.vertex = vertex
        self.axis = axis
        self.half_angle = float(half_angle)
        self._cone = _CanonicalCone(2, self.half_angle)
        # Rotation taking the axis to (0, 1).
        self._rot = np.array([[axis[1], -axis[0]], [axis[0], axis[1]]])

    def __repr__(self):
        return (
            f"Wedge2D({self.vertex.tolist()}, {self.axis.tolist()}, {self.half_angle})"
        )

    def _canon(self, x):
        return (x - self.vertex) @ self._rot.T

    def contains_many(self, x):
        return self._cone.contains_many(self._canon(x))

    def dist_many(self, x):
        return self._cone.dist_many(self._canon(x))

    def segment_exit_many(self, a, b):
        return self._cone.segment_exit_many(self._canon(a), self._canon(b))

    def deep_point(self):
        return self.vertex + self.axis

    @classmethod
    def from_exponent(cls, p: float, vertex=(0.0, 0.0), axis=(0.0, 1.0)) -> "Wedge2D":
        return cls(vertex, axis, theta_pd(p, 2))


class Cone(Domain):
    """Right circular cone in R^d, vertex at the origin, axis = last coordinate."""

    def __init__(self, d: int, theta: float, p: Optional[float] = None):
        self._cone = _CanonicalCone(int(d), float(theta))
        self.dim = int(d)
        self.theta = float(theta)
        self.p = None if p is None else float(p)

    def __repr__(self):
        return f"Cone(d={self.dim}, theta={self.theta})"

    @classmethod
    def from_exponent(cls, p: float, d: int) -> "Cone":
        return cls(d, theta_pd(p, d), p=p)

    def contains_many(self, x):
        return self._cone.contains_many(x)

    def dist_many(self, x):
        return self._cone.dist_many(x)

    def segment_exit_many(self, a, b):
        return self._cone.segment_exit_many(a, b)

    def axis_point(self, r: float) -> np.ndarray:
        pt = np.zeros(self.dim)
        pt[-1] = float(r)
        return pt

    def deep_point(self):
        return self.axis_point(1.0)


def bridge_absorption_prob(domain: Domain, a, b, dt: float) -> float:
    """Probability that a Brownian step a -> b over time dt secretly crossed
    the boundary, in the nearest-half-space approximation:
    exp(-2 * dist(a) * dist(b) / dt)."""
    if dt <= 0.0:
        raise GeometryError(f"dt must be positive, got {dt}")
    da = domain.dist_to_boundary(a)
    db = domain.dist_to_boundary(b)
    return math.exp(-2.0 * da * db / dt)


def domain_from_dict(spec: dict) -> Domain:
    """Build a domain from its JSON-config literal.

    Recognised forms::

        {"type": "interval", "a": 0, "b": 1}
        {"type": "box", "lo": [...], "hi": [...]}
        {"type": "ball", "center": [...], "radius": r}
        {"type": "polygon2d", "vertices": [[x, y], ...]}
        {"type": "wedge2d", "vertex": [x, y], "axis": [x, y], "half_angle": a}
        {"type": "cone", "d": 2, "theta": a}   (or "p" in place of "theta")
    """
    if not isinstance(spec, dict):
        raise GeometryError(f"domain literal must be an object, got {type(spec).__name__}")
    kind = spec.get("type")
    if kind is None:
        raise GeometryError("domain literal is missing the 'type' field")
    try:
        if kind == "interval":
            return Interval(_field(spec, "a"), _field(spec, "b"))
        if kind == "box":
            return Box(_field(spec, "lo"), _field(spec, "hi"))
        if kind == "ball":
            return Ball(_field(spec, "center"), _field(spec, "radius"))
        if kind == "polygon2d":
            return Polygon2D(_field(spec, "vertices"))
        if kind == "wedge2d":
            vertex = spec.get("vertex", (0.0, 0.0))
            axis = spec.get("axis", (0.0, 1.0))
            half = spec.get("half_angle", spec.get("halfAngle"))
            if half is None:
                raise GeometryError("wedge2d literal is missing the 'half_angle' field")
            return Wedge2D(vertex, axis, half)
        if kind == "cone":
            d = int(_field(spec, "d"))
            if "theta" in spec:
                return Cone(d, spec["theta"], p=spec.get("p"))
            if "p" in spec:
                return Cone.from_exponent(spec["p"], d)
            raise GeometryError("cone literal needs either 'theta' or 'p'")
    except GeometryError:
        raise
    except (TypeError, ValueError) as exc:
        raise GeometryError(f"bad domain literal for type '{kind}': {exc}") from exc
    raise GeometryError(f"unknown domain type '{kind}'")


def _field(spec: dict, name: str):
    if name not in spec:
        raise GeometryError(f"domain literal is missing the '{name}' field")
    return spec[name]
