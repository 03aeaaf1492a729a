"""Planar polylines and segment predicates.

Everything downstream (arc predicates, Brouwer-line checks, loop indices)
reduces to a small set of operations on piecewise-linear curves: segment
intersection, point/segment distance, arclength parametrization, even-odd
point-in-polygon.  All tolerances are explicit arguments; nothing here
guesses at grazing contacts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    pass


def _as_points(vertices) -> np.ndarray:
    arr = np.asarray(vertices, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GeometryError(f"expected (N,2) vertex array, got shape {arr.shape}")
    return arr


@dataclass
class Polyline:
    """Piecewise-linear curve, optionally closed, optionally with proper ends.

    ``start_ray``/``end_ray`` are unit directions in which the curve continues
    past its first/last vertex, for proper (half-)lines.
    """

    vertices: np.ndarray
    closed: bool = False
    start_ray: tuple | None = None
    end_ray: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = _as_points(self.vertices)
        if len(self.vertices) < 1:
            raise GeometryError("polyline needs at least one vertex")
        if self.closed and (self.start_ray or self.end_ray):
            raise GeometryError("closed polyline cannot carry ray extensions")
        for name in ("start_ray", "end_ray"):
            ray = getattr(self, name)
            if ray is not None:
                ray = np.asarray(ray, dtype=float)
                nrm = float(np.hypot(ray[0], ray[1]))
                if nrm == 0.0:
                    raise GeometryError("ray direction must be nonzero")
                setattr(self, name, tuple(ray / nrm))

    @property
    def n(self) -> int:
        return len(self.vertices)

    def segments(self):
        """Yield (a, b) vertex pairs, wrapping around when closed."""
        v = self.vertices
        for i in range(len(v) - 1):
            yield v[i], v[i + 1]
        if self.closed and len(v) > 2:
            yield v[-1], v[0]

    def length(self) -> float:
        return float(sum(np.hypot(*(b - a)) for a, b in self.segments()))

    def arclengths(self) -> np.ndarray:
        v = self.vertices
        d = np.hypot(*(v[1:] - v[:-1]).T)
        return np.concatenate([[0.0], np.cumsum(d)])

    def point_at(self, s: float) -> np.ndarray:
        """Point at arclength s (clamped to the open polyline)."""
        cs = self.arclengths()
        s = min(max(s, 0.0), cs[-1])
        i = int(np.searchsorted(cs, s, side="right")) - 1
        i = min(max(i, 0), len(cs) - 2)
        seg = cs[i + 1] - cs[i]
        t = 0.0 if seg == 0.0 else (s - cs[i]) / seg
        return self.vertices[i] * (1 - t) + self.vertices[i + 1] * t

    def subarc(self, s0: float, s1: float) -> "Polyline":
        """Sub-polyline between arclengths s0 <= s1 of the open curve."""
        if s1 < s0:
            s0, s1 = s1, s0
        cs = self.arclengths()
        pts = [self.point_at(s0)]
        for i, c in enumerate(cs):
            if s0 < c < s1:
                pts.append(self.vertices[i])
        pts.append(self.point_at(s1))
        out = [pts[0]]
        for p in pts[1:]:
            if np.hypot(*(p - out[-1])) > 0.0:
                out.append(p)
        if len(out) == 1:
            out.append(out[0] + 0.0)
        return Polyline(np.array(out))

    def translated(self, dx: float, dy: float) -> "Polyline":
        return Polyline(
            self.vertices + np.array([dx, dy]),
            closed=self.closed,
            start_ray=self.start_ray,
            end_ray=self.end_ray,
            meta=dict(self.meta),
        )

    def reversed_(self) -> "Polyline":
        return Polyline(
            self.vertices[::-1].copy(),
            closed=self.closed,
            start_ray=self.end_ray,
            end_ray=self.start_ray,
            meta=dict(self.meta),
        )

    def with_rays_clipped(self, box) -> "Polyline":
        """Extend ray ends until they exit `box` = (x0, x1, y0, y1)."""
        x0, x1, y0, y1 = box
        verts = [self.vertices]
        if self.start_ray is not None:
            p = _ray_box_exit(self.vertices[0], self.start_ray, box)
            verts.insert(0, p[None, :])
        if self.end_ray is not None:
            p = _ray_box_exit(self.vertices[-1], self.end_ray, box)
            verts.append(p[None, :])
        return Polyline(np.vstack(verts), closed=self.closed)

    def is_simple(self, tol: float = 0.0) -> bool:
        """No self-intersection: non-adjacent segment pairs stay > tol apart."""
        segs = list(self.segments())
        m = len(segs)
        for i in range(m):
            for j in range(i + 2, m):
                if self.closed and i == 0 and j == m - 1:
                    continue
                if segment_distance(*segs[i], *segs[j]) <= tol:
                    return False
        return True

    def is_axis_aligned(self, tol: float = 0.0) -> bool:
        return all(
            abs(b[0] - a[0]) <= tol or abs(b[1] - a[1]) <= tol
            for a, b in self.segments()
        )


def _ray_box_exit(origin, direction, box) -> np.ndarray:
    x0, x1, y0, y1 = box
    ox, oy = origin
    dx, dy = direction
    ts = []
    if dx > 0:
        ts.append((x1 - ox) / dx)
    elif dx < 0:
        ts.append((x0 - ox) / dx)
    if dy > 0:
        ts.append((y1 - oy) / dy)
    elif dy < 0:
        ts.append((y0 - oy) / dy)
    ts = [t for t in ts if t > 0]
    if not ts:
        raise GeometryError("ray does not exit the box")
    t = min(ts)
    return np.array([ox + t * dx, oy + t * dy])


def point_segment_distance(p, a, b) -> float:
    p = np.asarray(p, float)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.hypot(*(p - a)))
    t = float((p - a) @ ab) / denom
    t = min(max(t, 0.0), 1.0)
    return float(np.hypot(*(p - (a + t * ab))))


def segment_intersection(a0, a1, b0, b1):
    """Proper or endpoint intersection of two segments.

    Returns (point, t, u) with point = a0 + t*(a1-a0) = b0 + u*(b1-b0),
    t, u in [0, 1], or None when the segments do not cross.  Parallel
    overlapping segments report the a0-side overlap endpoint.
    """
    a0 = np.asarray(a0, float)
    a1 = np.asarray(a1, float)
    b0 = np.asarray(b0, float)
    b1 = np.asarray(b1, float)
    r = a1 - a0
    s = b1 - b0
    denom = r[0] * s[1] - r[1] * s[0]
    q = b0 - a0
    if denom == 0.0:
        cross = q[0] * r[1] - q[1] * r[0]
        if cross != 0.0:
            return None
        rr = float(r @ r)
        if rr == 0.0:
            if float(np.hypot(*q)) == 0.0:
                return a0.copy(), 0.0, 0.0
            return None
        t0 = float(q @ r) / rr
        t1 = float((b1 - a0) @ r) / rr
        lo, hi = min(t0, t1), max(t0, t1)
        lo = max(lo, 0.0)
        hi = min(hi, 1.0)
        if lo > hi:
            return None
        pt = a0 + lo * r
        u = 0.0 if t1 == t0 else (lo - t0) / (t1 - t0)
        return pt, lo, u
    t = (q[0] * s[1] - q[1] * s[0]) / denom
    u = (q[0] * r[1] - q[1] * r[0]) / denom
    if -0.0 <= t <= 1.0 and -0.0 <= u <= 1.0:
        return a0 + t * r, float(t), float(u)
    return None


def segment_distance(a0, a1, b0, b1) -> float:
    """Minimum distance between two closed segments."""
    if segment_intersection(a0, a1, b0, b1) is not None:
        return 0.0
    return min(
        point_segment_distance(a0, b0, b1),
        point_segment_distance(a1, b0, b1),
        point_segment_distance(b0, a0, a1),
        point_segment_distance(b1, a0, a1),
    )


def _project_to_segment(p, a, b) -> np.ndarray:
    p = np.asarray(p, float)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return a.copy()
    t = min(max(float((p - a) @ ab) / denom, 0.0), 1.0)
    return a + t * ab


def segment_closest_points(a0, a1, b0, b1):
    """(point, distance) for the closest approach of two closed segments;
    the point is the midpoint of the achieving pair (the contact locus)."""
    hit = segment_intersection(a0, a1, b0, b1)
    if hit is not None:
        return np.asarray(hit[0], float), 0.0
    best = (math.inf, None)
    for p, (c, d) in ((a0, (b0, b1)), (a1, (b0, b1)),
                      (b0, (a0, a1)), (b1, (a0, a1))):
        q = _project_to_segment(p, c, d)
        dist = float(np.hypot(*(np.asarray(p, float) - q)))
        if dist < best[0]:
            best = (dist, 0.5 * (np.asarray(p, float) + q))
    return best[1], best[0]


def polyline_distance(p: Polyline, q: Polyline) -> float:
    """Minimum distance between two polylines (O(nm) segment sweep)."""
    best = math.inf
    qsegs = list(q.segments())
    if not qsegs:
        qsegs = [(q.vertices[0], q.vertices[0])]
    psegs = list(p.segments())
    if not psegs:
        psegs = [(p.vertices[0], p.vertices[0])]
    for a0, a1 in psegs:
        for b0, b1 in qsegs:
            d = segment_distance(a0, a1, b0, b1)
            if d < best:
                best = d
                if best == 0.0:
                    return 0.0
    return best


def polyline_crossings(p: Polyline, q: Polyline):
    """All intersection points between two polylines, with arclength tags."""
    hits = []
    pcs = p.arclengths()
    qcs = q.arclengths()
    for i, (a0, a1) in enumerate(p.segments()):
        la = np.hypot(*(a1 - a0))
        for j, (b0, b1) in enumerate(q.segments()):
            hit = segment_intersection(a0, a1, b0, b1)
            if hit is None:
                continue
            pt, t, u = hit
            lb = np.hypot(*(b1 - b0))
            hits.append((pt, pcs[i] + t * la, qcs[j] + u * lb))
    return hits


def point_in_polygon(point, polygon: np.ndarray) -> bool:
    """Even-odd rule; polygon is an (N,2) closed vertex loop."""
    x, y = float(point[0]), float(point[1])
    poly = _as_points(polygon)
    inside = False
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        if (y0 > y) != (y1 > y):
            xs = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if x < xs:
                inside = not inside
    return inside


def circle_polyline(center, radius: float, n: int = 64) -> Polyline:
    ang = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    pts = np.column_stack(
        [center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)]
    )
    return Polyline(pts, closed=True)
