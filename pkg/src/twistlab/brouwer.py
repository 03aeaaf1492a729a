"""Computational primitives for Brouwer-line constructions in the plane.

Works with a fixed-point-free orientation-preserving plane homeomorphism h,
usually obtained from a strip lift through the compactification
d(x, y) = (x, (y - 1/2)/(y (1 - y))).  Provides:

* translation-arc and abutting predicates over sampled polylines;
* the classification of the vertical ray from the basepoint B of a
  translation arc AB (with BC = h(AB)): it abuts on the inverse image
  (case i), abuts on the image (case ii), or stays free (case iii);
* the free side of the extracted translation arc PP', located by building
  the canonical closed curve (AB, BC, the used image arc, PP', and the
  connecting piece) and testing probes with the even-odd rule;
* displacement moduli eps_n / eta_n over growing squares, and mid-segments;
* a best-effort half-line constructor that iterates base points, applies
  the deviation of the path at integer verticals (periodic maps), and
  terminates through the twist-at-infinity shortcut, returning honest
  failure reports otherwise;
* crossing data of integer verticals with their inverse images, shifted
  copies included;
* a Brouwer-line verifier (separation plus sidedness at a stated window
  and resolution) and an eventual-periodicity detector over the recorded
  deviation events.

Every predicate is a PL computation with explicit tolerances; grazing
contacts are reported, never resolved by guessing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import geom
from .dynamics import LiftMap
from .geom import Polyline


class BoundaryPoint(ValueError):
    """y in {0, 1} has no image under the strip-to-plane chart."""


class SamplingInconclusive(RuntimeError):
    """An intersection decision fell inside the tangency guard band."""


class TangencyAmbiguous(RuntimeError):
    """A crossing was found but its transversality cannot be certified."""


class ResolutionLimit(RuntimeError):
    """Root structure finer than the scan resolution."""


@dataclass(frozen=True)
class PlaneMap:
    """Fixed-point-free orientation-preserving plane homeomorphism oracle.

    Fixed-point freeness is an assumed contract, spot-checked by callers,
    not proved.  `periodic` asserts h(x+1, y) = h(x, y) + (1, 0).
    `twist_y0`, when set, is a height above which p1(h(x, y)) > x and
    p1(h^-1(x, y)) < x hold everywhere.
    """

    forward: Callable
    inverse: Callable
    periodic: bool = False
    twist_y0: float | None = None
    name: str = ""

    def fwd(self, p) -> np.ndarray:
        q = self.forward((float(p[0]), float(p[1])))
        return np.array([q[0], q[1]], dtype=float)

    def inv(self, p) -> np.ndarray:
        q = self.inverse((float(p[0]), float(p[1])))
        return np.array([q[0], q[1]], dtype=float)


@dataclass(frozen=True)
class Moduli:
    n: int
    eps_n: float
    eta_n: float
    grid_step: float


@dataclass(frozen=True)
class DeviationEvent:
    vertical_index: int
    arc_index: int
    side: str  # "l" or "r"
    base_point: tuple
    case: str  # "ii" or "iii"


@dataclass
class FailureReport:
    kind: str  # "no-base-point" | "tangency-ambiguous" | "step-limit" | ...
    detail: str
    partial: Polyline | None = None
    events: list = field(default_factory=list)


@dataclass
class ConstructionResult:
    status: str  # "terminated-remark21" | "terminated-horizon" | "failure"
    line: Polyline | None
    events: list = field(default_factory=list)
    failure: FailureReport | None = None
    legs: int = 0

    @property
    def ok(self) -> bool:
        return self.status != "failure"


@dataclass(frozen=True)
class ConstructionParams:
    step: float = 0.02
    t_max: float = 40.0
    image_chord: float = 0.05
    tol: float = 1e-6
    max_legs: int = 16
    orbit_horizon: int = 5
    twist_margin: float = 0.5
    moduli_grid_step: float = 0.125
    max_candidates: int = 9
    bisect_iters: int = 60


# --- compactification --------------------------------------------------------


def strip_to_plane(x: float, y: float):
    """d(x, y) = (x, (y - 1/2)/(y (1 - y))) on the open strip."""
    if not 0.0 < y < 1.0:
        raise BoundaryPoint(f"y = {y} not in (0, 1)")
    return (x, (y - 0.5) / (y * (1.0 - y)))


def plane_to_strip(x: float, v: float):
    """Closed-form inverse of the compactification, branch with y in (0, 1)."""
    if v == 0.0:
        return (x, 0.5)
    y = ((v - 1.0) + math.hypot(1.0, v)) / (2.0 * v)
    return (x, y)


def compactify(f: LiftMap) -> PlaneMap:
    """Conjugate a boundary-fixing strip lift to a plane homeomorphism.

    The interior of the strip carries all fixed points of the conjugate, so
    a lift with Fix = {y = 0} compactifies to a fixed-point-free plane map.
    """

    def forward(p):
        x, y = plane_to_strip(p[0], p[1])
        X, Y = f.forward((x, y))
        return strip_to_plane(X, Y)

    def inverse(q):
        X, Y = plane_to_strip(q[0], q[1])
        x, y = f.inverse((X, Y))
        return strip_to_plane(x, y)

    twist_y0 = None
    if f.twist_from_y is not None:
        delta = max(f.twist_from_y, 1e-9)
        if delta < 1.0:
            twist_y0 = (delta - 0.5) / (delta * (1.0 - delta))
    return PlaneMap(
        forward=forward,
        inverse=inverse,
        periodic=True,
        twist_y0=twist_y0,
        name=f"compactified {f.name}",
    )


# --- sampled images ----------------------------------------------------------


def sample_image(hmap: Callable, arc: Polyline, chord: float, max_depth: int = 16) -> Polyline:
    """Image of a polyline under a point map, refined until consecutive
    image points are closer than `chord`."""
    cs = arc.arclengths()
    total = cs[-1]
    ts = list(np.linspace(0.0, total, max(2, len(arc.vertices))))
    pts = {t: np.asarray(hmap(arc.point_at(t)), float) for t in ts}
    changed = True
    depth = 0
    while changed and depth < max_depth:
        changed = False
        new_ts = []
        for a, b in zip(ts[:-1], ts[1:]):
            if float(np.hypot(*(pts[a] - pts[b]))) > chord:
                m = 0.5 * (a + b)
                pts[m] = np.asarray(hmap(arc.point_at(m)), float)
                new_ts.append(m)
                changed = True
        if new_ts:
            ts = sorted(set(ts) | set(new_ts))
        depth += 1
    return Polyline(np.array([pts[t] for t in ts]))


# --- translation-arc predicate -----------------------------------------------


def is_translation_arc(h: PlaneMap, alpha: Polyline, tol: float = 1e-6,
                       chord: float | None = None) -> bool:
    """alpha(1) = h(alpha(0)) and alpha meets h(alpha) only at that point.

    Any other contact closer than tol is a rejection when it is a clean
    crossing; contacts inside the guard band [tol, 3 tol) raise
    SamplingInconclusive rather than being resolved by fiat.
    """
    if alpha.closed:
        raise ValueError("translation arc must be open")
    start = alpha.vertices[0]
    end = alpha.vertices[-1]
    h_start = h.fwd(start)
    if float(np.hypot(*(end - h_start))) > tol:
        return False
    chord = chord if chord is not None else max(tol * 10.0, alpha.length() / 200.0)
    image = sample_image(h.fwd, alpha, chord)

    sanctioned = h_start
    guard = 3.0 * tol
    excl = max(guard, 2.0 * chord)
    grazing = math.inf
    for a0, a1 in alpha.segments():
        for b0, b1 in image.segments():
            contact, d = geom.segment_closest_points(a0, a1, b0, b1)
            if d >= guard:
                continue
            # contacts at the sanctioned endpoint h(z) are the expected one
            if float(np.hypot(*(contact - sanctioned))) <= excl:
                continue
            if d == 0.0:
                return False  # clean crossing away from h(z)
            grazing = min(grazing, d)
    if grazing < guard:
        raise SamplingInconclusive(
            f"near-contact at distance {grazing:.3e} without a crossing "
            f"(guard band {guard:.1e})"
        )
    return True


# --- abutting march ----------------------------------------------------------


@dataclass
class MarchOutcome:
    kind: str  # "inverse" | "image" | "vertical" | "twist-stop" | "horizon" | "avoid-hit" | "ambiguous"
    t_star: float | None = None
    P: np.ndarray | None = None
    P_prime: np.ndarray | None = None
    hit_arclength: float | None = None
    vertical_index: int | None = None
    tip: np.ndarray | None = None
    detail: str = ""


class _Marcher:
    """Straight march from `origin` along `direction`, watching for the tip's
    image or preimage to land on the traversed broken arc.

    `prefix` is an already-traversed polyline (for broken arcs in the
    deviation step); the traversed arc is prefix + origin->tip.  `avoid`
    polylines abort the march when approached within tol.  When
    `verticals` is set, crossing an integer vertical x = j fires first.
    `twist_stop`, for upward marches of maps with a twist height, certifies
    an unbounded ray once the tip clears y0 + margin with the traversed
    part disjoint from its image.
    """

    def __init__(self, h: PlaneMap, origin, direction, params: ConstructionParams,
                 prefix: Polyline | None = None, avoid=(), verticals: bool = False,
                 twist_stop: bool = False):
        self.h = h
        self.origin = np.asarray(origin, float)
        self.direction = np.asarray(direction, float)
        self.params = params
        self.prefix = prefix
        self.avoid = list(avoid)
        self.verticals = verticals and h.periodic
        self.twist_stop = twist_stop and h.twist_y0 is not None

    def tip(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction

    def _arc_polyline(self, t: float) -> Polyline:
        pts = [self.origin, self.tip(t)]
        if self.prefix is not None:
            pts = list(self.prefix.vertices) + pts[1:]
            pts[0] = self.prefix.vertices[0]
            return Polyline(np.vstack([self.prefix.vertices, self.tip(t)[None, :]]))
        return Polyline(np.array(pts))

    def _arc_segments(self, t: float):
        segs = []
        if self.prefix is not None:
            segs.extend(self.prefix.segments())
        segs.append((self.origin, self.tip(t)))
        return segs

    def _image_hit(self, mapped: Callable, t_lo: float, t_hi: float):
        """First crossing of the mapped-tip path with the traversed arc in
        (t_lo, t_hi], located by stepwise segment tests plus bisection."""
        p_lo = mapped(self.tip(t_lo))
        p_hi = mapped(self.tip(t_hi))
        arc_segs = self._arc_segments(t_hi)
        for a0, a1 in arc_segs:
            hit = geom.segment_intersection(p_lo, p_hi, a0, a1)
            if hit is None:
                continue
            # bisect on the signed side of the crossed segment
            seg = np.asarray(a1, float) - np.asarray(a0, float)
            nrm = np.array([-seg[1], seg[0]])
            ln = float(np.hypot(*nrm))
            if ln == 0.0:
                continue
            nrm /= ln

            def side(t):
                return float((mapped(self.tip(t)) - np.asarray(a0, float)) @ nrm)

            lo, hi = t_lo, t_hi
            s_lo, s_hi = side(lo), side(hi)
            if s_lo == 0.0:
                t_star = lo
            elif s_hi == 0.0 or s_lo * s_hi < 0.0:
                for _ in range(self.params.bisect_iters):
                    mid = 0.5 * (lo + hi)
                    s_mid = side(mid)
                    if s_mid == 0.0:
                        lo = hi = mid
                        break
                    if s_lo * s_mid < 0.0:
                        hi, s_hi = mid, s_mid
                    else:
                        lo, s_lo = mid, s_mid
                t_star = 0.5 * (lo + hi)
            else:
                continue
            landing = mapped(self.tip(t_star))
            # the landing must sit on the traversed arc strictly below the tip
            arc = self._arc_polyline(t_star)
            cs = arc.arclengths()
            d_arc = min(
                geom.point_segment_distance(landing, s0, s1)
                for s0, s1 in arc.segments()
            )
            if d_arc > 10.0 * self.params.tol:
                continue
            # arclength of the landing point along the arc
            best_s = None
            acc = 0.0
            for s0, s1 in arc.segments():
                seg_len = float(np.hypot(*(np.asarray(s1) - np.asarray(s0))))
                d = geom.point_segment_distance(landing, s0, s1)
                if d <= 10.0 * self.params.tol:
                    ab = np.asarray(s1, float) - np.asarray(s0, float)
                    denom = float(ab @ ab)
                    tt = 0.0 if denom == 0.0 else float(
                        (landing - np.asarray(s0, float)) @ ab
                    ) / denom
                    tt = min(max(tt, 0.0), 1.0)
                    best_s = acc + tt * seg_len
                    break
                acc += seg_len
            if best_s is None:
                continue
            total = cs[-1]
            if best_s < self.params.tol:
                raise TangencyAmbiguous(
                    "image of the tip lands at the base of the arc"
                )
            if best_s > total - self.params.tol:
                # landing at the moving tip itself: grazing, not an event
                continue
            return t_star, landing, best_s
        return None

    def run(self) -> MarchOutcome:
        par = self.params
        t = 0.0
        x0 = self.origin[0]
        horizontal = abs(self.direction[1]) < 0.5
        # the first integer vertical strictly ahead of the leg's start
        t_vertical = None
        j_vertical = None
        if self.verticals and horizontal and self.direction[0] != 0.0:
            if self.direction[0] > 0.0:
                j = math.floor(x0) + 1
            else:
                j = math.ceil(x0) - 1
            j_vertical = int(j)
            t_vertical = (j - x0) / self.direction[0]
        while t < par.t_max:
            t_next = min(t + par.step, par.t_max)
            if t_vertical is not None and t < t_vertical <= t_next:
                return MarchOutcome(
                    kind="vertical",
                    t_star=t_vertical,
                    tip=np.array([float(j_vertical), self.origin[1]]),
                    vertical_index=j_vertical,
                )
            # adaptive sub-stepping so image chords stay short
            span = float(np.hypot(*(self.h.fwd(self.tip(t_next)) - self.h.fwd(self.tip(t)))))
            n_sub = max(1, int(math.ceil(span / par.image_chord)))
            sub = np.linspace(t, t_next, n_sub + 1)
            for lo, hi in zip(sub[:-1], sub[1:]):
                for kind, mapped in (("inverse", self.h.fwd), ("image", self.h.inv)):
                    # kind "inverse": h(tip) on the arc  <=>  tip abuts on h^-1(arc)
                    # kind "image":   h^-1(tip) on the arc <=> tip abuts on h(arc)
                    hit = self._image_hit(mapped, lo, hi)
                    if hit is not None:
                        t_star, landing, s_arc = hit
                        P = self.tip(t_star)
                        return MarchOutcome(
                            kind=kind,
                            t_star=t_star,
                            P=P,
                            P_prime=landing,
                            hit_arclength=s_arc,
                            tip=P,
                        )
                tip_seg = Polyline(np.array([self.tip(lo), self.tip(hi)]))
                for other in self.avoid:
                    if geom.polyline_distance(tip_seg, other) < par.tol:
                        return MarchOutcome(
                            kind="avoid-hit",
                            t_star=hi,
                            tip=self.tip(hi),
                            detail="march approached an excluded set",
                        )
            t = t_next
            if self.twist_stop and self.direction[1] > 0.5:
                y0 = self.h.twist_y0
                if self.tip(t)[1] >= max(y0, self.origin[1]) + par.twist_margin:
                    arc = self._arc_polyline(t)
                    img = sample_image(self.h.fwd, arc, par.image_chord)
                    if geom.polyline_distance(arc, img) > par.tol:
                        return MarchOutcome(kind="twist-stop", t_star=t, tip=self.tip(t))
        return MarchOutcome(kind="horizon", t_star=t, tip=self.tip(t))


@dataclass
class AbutReport:
    case: str  # "i" | "ii" | "iii"
    t_star: float | None
    P: tuple | None
    P_prime: tuple | None
    PPp: Polyline | None
    horizon: bool = False
    detail: str = ""


def abut_classify(h: PlaneMap, AB: Polyline, BC: Polyline, B,
                  t_max: float = 40.0, step: float = 0.02,
                  params: ConstructionParams | None = None) -> AbutReport:
    """Classify how the upward vertical ray from B abuts.

    Case i: the ray meets the inverse image of its traversed part first
    (h of the tip lands on the arc below); case ii: it meets the image
    first; case iii: neither happens before t_max and the disjointness
    conditions hold there, reported with a horizon flag.
    """
    par = params or ConstructionParams(step=step, t_max=t_max)
    B = np.asarray(B, float)
    _check_vertical_clearance(AB, BC, B, par.tol)
    marcher = _Marcher(h, B, (0.0, 1.0), par)
    out = marcher.run()
    if out.kind in ("inverse", "image"):
        P = out.P
        Pp = out.P_prime
        lo = np.array([B[0], min(P[1], Pp[1])])
        hi = np.array([B[0], max(P[1], Pp[1])])
        ppp = Polyline(np.array([lo, hi]))
        case = "i" if out.kind == "inverse" else "ii"
        return AbutReport(case=case, t_star=out.t_star, P=tuple(P),
                          P_prime=tuple(Pp), PPp=ppp)
    if out.kind in ("horizon", "twist-stop"):
        # the disjointness conditions concern the ray's interior: offset the
        # base, whose neighborhood legitimately touches AB, BC and C = h(B)
        start = B + np.array([0.0, 20.0 * par.tol])
        ray = Polyline(np.array([start, out.tip]))
        pieces = [sample_image(h.fwd, ray, par.image_chord),
                  sample_image(h.inv, ray, par.image_chord)]
        base = Polyline(np.vstack([AB.vertices, BC.vertices]))
        dmin = min(geom.polyline_distance(p, base) for p in pieces)
        dray = geom.polyline_distance(ray, base)
        if min(dmin, dray) <= par.tol:
            raise TangencyAmbiguous(
                "ray or its images graze AB/BC at the horizon"
            )
        return AbutReport(case="iii", t_star=out.t_star, P=None, P_prime=None,
                          PPp=None, horizon=(out.kind == "horizon"),
                          detail=out.kind)
    raise TangencyAmbiguous(out.detail or f"march ended with {out.kind}")


def _check_vertical_clearance(AB: Polyline, BC: Polyline, B, tol: float):
    """The vertical through B must meet AB and BC only at B.

    The rays start 20*tol away from B so the arcs' own endpoints at B do
    not trip the test; contacts inside that neighborhood are below the
    contact resolution anyway.
    """
    B = np.asarray(B, float)
    up = Polyline(np.array([B + [0.0, 20.0 * tol], B + [0.0, 1e3]]))
    down = Polyline(np.array([B - [0.0, 1e3], B - [0.0, 20.0 * tol]]))
    for curve in (AB, BC):
        for ray in (up, down):
            if geom.polyline_distance(ray, curve) < tol:
                raise TangencyAmbiguous(
                    "vertical line through B meets AB or BC away from B"
                )


# --- free side ---------------------------------------------------------------


def free_side_initial(h: PlaneMap, AB: Polyline, BC: Polyline, B,
                      report: AbutReport,
                      params: ConstructionParams | None = None) -> tuple:
    """Free side of PP' for the initial vertical ray, by the closed curve.

    Builds the canonical simple closed curve through A, B, C, P, P' (the
    exact pieces depend on the case), takes the bounded domain U1 it
    encloses, and probes both sides of the midpoint of PP'; the free side
    is the one outside U1.  Returns the outward unit normal (+-1, 0).
    """
    par = params or ConstructionParams()
    B = np.asarray(B, float)
    if report.case not in ("i", "ii"):
        raise ValueError("free side is defined for cases i and ii only")
    P = np.asarray(report.P, float)
    Pp = np.asarray(report.P_prime, float)
    t_star = report.t_star
    # the param of the ray point whose image/preimage is P'
    tau = Pp[1] - B[1]
    ray_full = Polyline(np.array([B, B + [0.0, max(t_star, tau)]]))

    def ray_piece(t_end):
        return Polyline(np.array([B, B + [0.0, t_end]]))

    if report.case == "i":
        # A -> B -> C -> h(gamma[0,t*]) -> P' ; PP' ; h^-1(gamma[0,tau]) rev -> A
        used = ray_piece(t_star)
        img = sample_image(h.fwd, used, par.image_chord)          # C .. P'
        pre = sample_image(h.inv, ray_piece(tau), par.image_chord)  # A .. P
        pieces = [AB.vertices, BC.vertices, img.vertices,
                  np.array([Pp, P]), pre.vertices[::-1]]
    else:
        # A -> B -> C -> h(gamma[0,tau]) -> P ; PP' ; h^-1(gamma[0,t*]) rev -> A
        img = sample_image(h.fwd, ray_piece(tau), par.image_chord)   # C .. P
        pre = sample_image(h.inv, ray_piece(t_star), par.image_chord)  # A .. P'
        pieces = [AB.vertices, BC.vertices, img.vertices,
                  np.array([P, Pp]), pre.vertices[::-1]]

    loop_pts = [pieces[0][0]]
    for piece in pieces:
        for q in piece:
            if float(np.hypot(*(q - loop_pts[-1]))) > 1e-12:
                loop_pts.append(q)
    loop = np.array(loop_pts)
    closure_gap = float(np.hypot(*(loop[0] - loop[-1])))
    snap = max(20.0 * par.tol, 5.0 * par.image_chord)
    if closure_gap > snap:
        raise SamplingInconclusive(
            f"canonical curve fails to close (gap {closure_gap:.3e})"
        )

    mid = 0.5 * (P + Pp)
    length = float(np.hypot(*(P - Pp)))
    delta = length / 4.0
    for _ in range(40):
        left_in = geom.point_in_polygon(mid + [-delta, 0.0], loop)
        right_in = geom.point_in_polygon(mid + [delta, 0.0], loop)
        if left_in != right_in:
            return (1.0, 0.0) if left_in else (-1.0, 0.0)
        delta *= 0.5
        if delta < 1e-12 * max(1.0, length):
            break
    raise TangencyAmbiguous("probes on both sides of PP' agree; U1 undecidable")


# --- moduli ------------------------------------------------------------------


def moduli(h: PlaneMap, n: int, grid_step: float = 0.125) -> Moduli:
    """eps_n = sampled inf over [-n, n]^2 of the displacement of h and h^-1;
    eta_n = largest dyadic fraction of eps_n/2 passing the sampled uniform
    continuity test |h(x) - h(y)| <= eps_n/2 whenever |x - y| <= t."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = np.arange(-n, n + grid_step / 2, grid_step)
    eps = math.inf
    lip = 0.0
    prev_row_f = prev_row_i = None
    for y in xs:
        row_f = []
        row_i = []
        prev_f = prev_i = None
        for x in xs:
            pf = h.fwd((x, y))
            pi = h.inv((x, y))
            eps = min(eps, float(np.hypot(pf[0] - x, pf[1] - y)),
                      float(np.hypot(pi[0] - x, pi[1] - y)))
            if prev_f is not None:
                lip = max(lip, float(np.hypot(*(pf - prev_f))) / grid_step,
                          float(np.hypot(*(pi - prev_i))) / grid_step)
            row_f.append(pf)
            row_i.append(pi)
            prev_f, prev_i = pf, pi
        if prev_row_f is not None:
            for a, b in zip(row_f, prev_row_f):
                lip = max(lip, float(np.hypot(*(a - b))) / grid_step)
            for a, b in zip(row_i, prev_row_i):
                lip = max(lip, float(np.hypot(*(a - b))) / grid_step)
        prev_row_f, prev_row_i = row_f, row_i
    eta = eps / 2.0
    while lip * eta > eps / 2.0 and eta > 1e-300:
        eta *= 0.5
    return Moduli(n=n, eps_n=eps, eta_n=eta, grid_step=grid_step)


def mid_segment(arc: Polyline, eta: float) -> Polyline | None:
    """Sub-arc whose points stay at least eta (in arclength) from both ends."""
    total = arc.length()
    if total <= 2.0 * eta:
        return None
    return arc.subarc(eta, total - eta)


# --- Brouwer-line verification -------------------------------------------------


@dataclass
class BrouwerLineReport:
    ok: bool
    separation: float
    sidedness_ok: bool
    ends_resolved: bool
    window: tuple
    resolution: float
    detail: str = ""


def verify_brouwer_line(h: PlaneMap, L: Polyline, window,
                        resolution: float = 1e-2) -> BrouwerLineReport:
    """Check the Brouwer-line property of a proper line on a window.

    (a) h(L) stays off L (minimum separation above the resolution-scaled
    tolerance); (b) all samples of h(L) lie on one side of L and all
    samples of h^-1(L) on the other, sides decided by crossing parity
    toward a far reference point.  When L does not cross the whole window
    (missing ray data), the result reports unresolved proper ends.
    """
    x0, x1, y0, y1 = window
    pad = 0.5 * max(x1 - x0, y1 - y0)
    big = (x0 - pad, x1 + pad, y0 - pad, y1 + pad)
    # the line is extended far past both the sampling region and the parity
    # reference point, so no test segment can escape around its ends
    huge = (x0 - 5 * pad, x1 + 5 * pad, y0 - 5 * pad, y1 + 5 * pad)
    try:
        L_ext = L.with_rays_clipped(huge)
        ends_resolved = (L.start_ray is not None and L.end_ray is not None) or L.closed
    except geom.GeometryError:
        L_ext = L
        ends_resolved = False
    if not ends_resolved:
        first, last = L_ext.vertices[0], L_ext.vertices[-1]
        inside = lambda p: big[0] < p[0] < big[1] and big[2] < p[1] < big[3]
        ends_resolved = not inside(first) and not inside(last)

    def clip_to_box(poly: Polyline, box) -> Polyline:
        bx0, bx1, by0, by1 = box
        pts = []
        for a, b in poly.segments():
            t_lo, t_hi = 0.0, 1.0
            d = b - a
            inside = True
            for lo, hi, p0, dd in ((bx0, bx1, a[0], d[0]), (by0, by1, a[1], d[1])):
                if dd == 0.0:
                    if not lo <= p0 <= hi:
                        inside = False
                        break
                    continue
                ta, tb = (lo - p0) / dd, (hi - p0) / dd
                if ta > tb:
                    ta, tb = tb, ta
                t_lo, t_hi = max(t_lo, ta), min(t_hi, tb)
                if t_lo > t_hi:
                    inside = False
                    break
            if not inside:
                continue
            for t in (t_lo, t_hi):
                q = a + t * d
                if not pts or float(np.hypot(*(q - pts[-1]))) > 1e-12:
                    pts.append(q)
        if len(pts) < 2:
            return poly
        return Polyline(np.array(pts))

    Lw = clip_to_box(L_ext, big)
    img = sample_image(h.fwd, Lw, resolution)
    pre = sample_image(h.inv, Lw, resolution)
    sep = min(geom.polyline_distance(img, L_ext),
              geom.polyline_distance(pre, L_ext))
    tol = resolution * 1e-3

    def parity(p, ref):
        # half-open rule on the line's segments so junction hits count once
        count = 0
        for a, b in L_ext.segments():
            hit = geom.segment_intersection(p, ref, a, b)
            if hit is not None and hit[2] < 1.0:
                count += 1
        return count % 2

    sided_ok = True
    detail = ""
    ref_base = np.array([x1 + 2.0 * pad, y1 + 1.37 * pad])
    for attempt in range(5):
        ref = ref_base + attempt * np.array([0.311 * pad, 0.173 * pad])
        try:
            par_img = {parity(p, ref) for p in img.vertices}
            par_pre = {parity(p, ref) for p in pre.vertices}
        except Exception:
            continue
        if len(par_img) == 1 and len(par_pre) == 1:
            sided_ok = par_img != par_pre
            break
    else:
        sided_ok = False
        detail = "parity test unstable"

    ok = sep > tol and sided_ok and ends_resolved
    if not ends_resolved and not detail:
        detail = "proper ends not certified beyond the window"
    return BrouwerLineReport(ok=ok, separation=float(sep), sidedness_ok=sided_ok,
                             ends_resolved=ends_resolved, window=tuple(window),
                             resolution=resolution, detail=detail)


# --- vertical crossings --------------------------------------------------------


@dataclass
class VerticalCrossings:
    k: int
    crossings: list  # (w, w_prime) pairs on V_k
    arcs: list  # candidate translation arcs as Polylines (oriented w -> w')
    degenerate: bool = False

    def shifted(self, m: int) -> "VerticalCrossings":
        return VerticalCrossings(
            k=self.k + m,
            crossings=[(w + np.array([m, 0.0]), wp + np.array([m, 0.0]))
                       for w, wp in self.crossings],
            arcs=[a.translated(m, 0.0) for a in self.arcs],
            degenerate=self.degenerate,
        )


def vertical_crossings(h: PlaneMap, k: int, y_window=(-8.0, 8.0),
                       scan_step: float = 0.02, tol: float = 1e-10) -> VerticalCrossings:
    """Intersections of V_k with h^-1(V_k) and the candidate vertical
    translation arcs they span.

    Roots of p1(h(k, y)) - k are located by sign change plus bisection;
    near-zero plateaus without a sign change raise ResolutionLimit.  Arcs
    properly containing another arc are dropped (the remaining ones are the
    translation-arc candidates).  An empty, fixed-point-free column is
    flagged degenerate: the finitude hypothesis wants at least one crossing.
    """

    def phi(y):
        return float(h.fwd((float(k), y))[0]) - k

    ys = np.arange(y_window[0], y_window[1] + scan_step / 2, scan_step)
    vals = [phi(y) for y in ys]
    roots = []
    for (ya, va), (yb, vb) in zip(zip(ys[:-1], vals[:-1]), zip(ys[1:], vals[1:])):
        if va == 0.0:
            roots.append(ya)
            continue
        if va * vb < 0.0:
            lo, hi, vlo = ya, yb, va
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                vm = phi(mid)
                if vm == 0.0:
                    lo = hi = mid
                    break
                if vlo * vm < 0.0:
                    hi = mid
                else:
                    lo, vlo = mid, vm
            roots.append(0.5 * (lo + hi))
        elif abs(va) < tol and abs(vb) < tol:
            raise ResolutionLimit(
                f"|p1 h - k| < {tol:g} without sign change near y = {ya}"
            )
    crossings = []
    for y in roots:
        w = np.array([float(k), y])
        wp = h.fwd(w)
        crossings.append((w, wp))
    arcs = []
    intervals = []
    for w, wp in crossings:
        lo, hi = sorted((w[1], wp[1]))
        intervals.append((lo, hi))
        arcs.append(Polyline(np.array([w, wp])))
    keep = []
    for i, (lo_i, hi_i) in enumerate(intervals):
        proper = False
        for j, (lo_j, hi_j) in enumerate(intervals):
            if i == j:
                continue
            if lo_i <= lo_j and hi_j <= hi_i and (hi_j - lo_j) < (hi_i - lo_i):
                proper = True
                break
        if not proper:
            keep.append(arcs[i])
    return VerticalCrossings(
        k=k,
        crossings=crossings,
        arcs=keep,
        degenerate=(len(crossings) == 0),
    )


# --- half-line construction ----------------------------------------------------


def _arc_base_point(arc: Polyline) -> np.ndarray:
    return arc.point_at(arc.length() / 2.0)


def _orbit_clear(h: PlaneMap, arc: Polyline, segment: Polyline, z,
                 horizon: int, tol: float, chord: float) -> bool:
    """Union of h^n(arc), n != 0, meets `segment` nowhere (z itself belongs
    to the n = 0 arc, which is excluded)."""
    cur_f = arc
    cur_b = arc
    for _ in range(horizon):
        cur_f = sample_image(h.fwd, cur_f, chord)
        cur_b = sample_image(h.inv, cur_b, chord)
        if geom.polyline_distance(cur_f, segment) < tol:
            return False
        if geom.polyline_distance(cur_b, segment) < tol:
            return False
    return True


def construct_half_line(h: PlaneMap, AB: Polyline, BC: Polyline, B,
                        params: ConstructionParams | None = None) -> ConstructionResult:
    """Best-effort half Brouwer line issuing upward from B.

    Follows the base-point iteration: classify the vertical ray, extract
    PP', find its free side, scan the mid-segment for a base point, march
    perpendicular legs, deviate at integer verticals of periodic maps
    (recording the events), and terminate on the twist-at-infinity rule or
    a clean horizon.  Nonconstructive steps fail honestly with a report
    carrying the partial polyline.
    """
    par = params or ConstructionParams()
    B = np.asarray(B, float)
    events: list = []
    vertices = [B.copy()]

    def push_vertex(p):
        p = np.asarray(p, float)
        if float(np.hypot(*(p - vertices[-1]))) > 1e-12:
            vertices.append(p.copy())
            return True
        return False

    def result_line(end_ray):
        return Polyline(np.array(vertices), end_ray=end_ray)

    def failure(kind, detail):
        return ConstructionResult(
            status="failure",
            line=Polyline(np.array(vertices)) if len(vertices) > 1 else None,
            events=events,
            failure=FailureReport(kind=kind, detail=detail,
                                  partial=Polyline(np.array(vertices)),
                                  events=events),
        )

    if not is_translation_arc(h, AB, tol=par.tol):
        return failure("precondition", "AB is not a translation arc")
    bc_img = sample_image(h.fwd, AB, par.image_chord)
    if geom.polyline_distance(bc_img, BC) > 50.0 * par.tol:
        return failure("precondition", "BC does not match h(AB)")

    # stage 0: the vertical ray from B
    marcher = _Marcher(h, B, (0.0, 1.0), par, avoid=(), twist_stop=True)
    out = marcher.run()
    if out.kind == "twist-stop":
        push_vertex(out.tip)
        return ConstructionResult(status="terminated-remark21",
                                  line=result_line((0.0, 1.0)),
                                  events=events, legs=1)
    if out.kind == "horizon":
        report = abut_classify(h, AB, BC, B, params=par)
        if report.case == "iii":
            push_vertex(out.tip)
            return ConstructionResult(status="terminated-horizon",
                                      line=result_line((0.0, 1.0)),
                                      events=events, legs=1)
        return failure("ambiguous", "horizon reached but case iii unverified")
    if out.kind not in ("inverse", "image"):
        return failure("ambiguous", f"initial march ended with {out.kind}")

    report = AbutReport(
        case="i" if out.kind == "inverse" else "ii",
        t_star=out.t_star, P=tuple(out.P), P_prime=tuple(out.P_prime),
        PPp=Polyline(np.array([
            [B[0], min(out.P[1], out.P_prime[1])],
            [B[0], max(out.P[1], out.P_prime[1])],
        ])),
    )
    free = np.asarray(
        free_side_initial(h, AB, BC, B, report, params=par), float
    )
    arc = report.PPp  # current translation arc (axis-aligned segment)
    crossings_cache: dict = {}

    def crossings_at(j: int) -> VerticalCrossings:
        if 0 not in crossings_cache:
            crossings_cache[0] = vertical_crossings(h, 0)
        return crossings_cache[0].shifted(j)

    legs = 1
    for _ in range(par.max_legs):
        legs += 1
        length = arc.length()
        span = max(abs(v) for v in np.abs(arc.vertices).ravel())
        n = max(1, int(math.ceil(span)))
        mod = moduli(h, n, grid_step=par.moduli_grid_step)
        mid = mid_segment(arc, mod.eta_n)
        if mid is None:
            return failure("no-base-point",
                           f"mid-segment empty: arc length {length:.3g} <= 2 eta "
                           f"{mod.eta_n:.3g}")
        mid_len = mid.length()
        offsets = [0.5]
        spacing = max(mod.eta_n / 4.0, mid_len / (2 * par.max_candidates))
        k = 1
        while len(offsets) < par.max_candidates:
            for sgn in (1.0, -1.0):
                s = 0.5 + sgn * k * spacing / max(mid_len, 1e-300)
                if 0.0 <= s <= 1.0:
                    offsets.append(s)
            k += 1
            if k * spacing > mid_len:
                break
        progressed = False
        for frac in offsets[: par.max_candidates]:
            base = mid.point_at(frac * mid_len)
            avoid = [
                sample_image(h.fwd, arc, par.image_chord),
                sample_image(h.inv, arc, par.image_chord),
            ]
            marcher = _Marcher(
                h, base, free, par,
                avoid=avoid,
                verticals=abs(free[1]) < 0.5,
                twist_stop=free[1] > 0.5,
            )
            out = marcher.run()
            if out.kind == "avoid-hit":
                continue
            added = push_vertex(base)
            if out.kind == "twist-stop":
                push_vertex(out.tip)
                return ConstructionResult(status="terminated-remark21",
                                          line=result_line(tuple(free)),
                                          events=events, legs=legs)
            if out.kind == "horizon":
                ray = Polyline(np.array([base, out.tip]))
                clear = all(
                    geom.polyline_distance(ray, a) > par.tol for a in avoid
                )
                img = sample_image(h.fwd, ray, par.image_chord)
                if clear and geom.polyline_distance(img, ray) > par.tol:
                    push_vertex(out.tip)
                    return ConstructionResult(status="terminated-horizon",
                                              line=result_line(tuple(free)),
                                              events=events, legs=legs)
                if added:
                    vertices.pop()
                continue
            if out.kind == "vertical":
                z = out.tip
                j = out.vertical_index
                handled = _deviate(h, par, push_vertex, events, base, z, j,
                                   arc, free, crossings_at)
                if handled is None:
                    if added:
                        vertices.pop()
                    continue
                if handled[0] == "terminated":
                    return ConstructionResult(
                        status=handled[1], line=result_line(handled[2]),
                        events=events, legs=legs)
                arc, free = handled[1], handled[2]
                progressed = True
                break
            if out.kind in ("inverse", "image"):
                P = out.P
                Pp = out.P_prime
                new_arc = Polyline(np.array([Pp, P]))
                # free side of the new (perpendicular) arc: away from the
                # triggering image curve's advance, i.e. opposite the side
                # the landing approached from
                perp = np.array([-free[1], free[0]])
                mapped = h.fwd if out.kind == "inverse" else h.inv
                probe = mapped(out.P + 1e-4 * free)
                side = float((probe - out.P) @ perp)
                if abs(side) < par.tol * 1e-3:
                    return failure("tangency-ambiguous",
                                   "cannot orient the free side of the new arc")
                new_free = -np.sign(side) * perp
                arc, free = new_arc, new_free
                progressed = True
                break
        if not progressed:
            return failure("no-base-point",
                           "no mid-segment candidate produced a usable leg")
    return failure("step-limit", f"exceeded max_legs = {par.max_legs}")


def _deviate(h, par, push_vertex, events, base, z, j, prev_arc, free,
             crossings_at):
    """Deviation of the path at vertical V_j.

    Returns ("continue", new_arc, new_free) when the construction goes on
    from a stored base point, ("terminated", status, ray_dir) when a free
    vertical half line through z finishes the construction, or None when no
    alternative applies (the candidate is abandoned).
    """
    data = crossings_at(j)
    if data.degenerate:
        return None
    side = "l" if free[0] < 0 else "r"
    new_free = np.array([-1.0, 0.0]) if side == "l" else np.array([1.0, 0.0])
    seg = Polyline(np.array([base, z]))
    avoid_prev = [
        prev_arc,
        sample_image(h.fwd, prev_arc, par.image_chord),
        sample_image(h.inv, prev_arc, par.image_chord),
    ]
    # case iii: z internal to a candidate arc, disjointness plus orbit condition
    for m, arc in enumerate(data.arcs):
        lo = min(arc.vertices[0][1], arc.vertices[-1][1])
        hi = max(arc.vertices[0][1], arc.vertices[-1][1])
        if not (lo + par.tol < z[1] < hi - par.tol):
            continue
        if any(geom.polyline_distance(arc, a) < par.tol for a in avoid_prev):
            continue
        if not _orbit_clear(h, arc, seg, z, par.orbit_horizon, par.tol,
                            par.image_chord):
            continue
        u = _arc_base_point(arc)
        push_vertex(z)
        push_vertex(u)
        events.append(DeviationEvent(vertical_index=j, arc_index=m, side=side,
                                     base_point=(float(u[0]), float(u[1])),
                                     case="iii"))
        return ("continue", arc, new_free)
    # cases i and ii: march along V_j from z, up then down
    prefix = Polyline(np.array([base, z]))
    for direction in ((0.0, 1.0), (0.0, -1.0)):
        marcher = _Marcher(h, z, direction, par, prefix=prefix,
                           avoid=avoid_prev[1:],
                           twist_stop=direction[1] > 0.5)
        out = marcher.run()
        if out.kind == "twist-stop" or out.kind == "horizon":
            ray = Polyline(np.array([z, out.tip]))
            img = sample_image(h.fwd, ray, par.image_chord)
            broken = Polyline(np.vstack([prefix.vertices, out.tip[None, :]]))
            if (geom.polyline_distance(img, broken) > par.tol
                    and all(geom.polyline_distance(broken, a) > par.tol
                            for a in avoid_prev[1:])):
                # deviation case i: free vertical half line through z
                push_vertex(z)
                push_vertex(out.tip)
                events.append(DeviationEvent(vertical_index=j, arc_index=-1,
                                             side=side,
                                             base_point=(float(z[0]), float(z[1])),
                                             case="i"))
                status = ("terminated-remark21" if out.kind == "twist-stop"
                          else "terminated-horizon")
                return ("terminated", status, tuple(direction))
            continue
        if out.kind == "image":
            # broken arc abuts on its image; it must contain a candidate arc
            lo = min(z[1], out.tip[1])
            hi = max(z[1], out.tip[1])
            for m, arc in enumerate(data.arcs):
                alo = min(arc.vertices[0][1], arc.vertices[-1][1])
                ahi = max(arc.vertices[0][1], arc.vertices[-1][1])
                if lo - par.tol <= alo and ahi <= hi + par.tol:
                    u = _arc_base_point(arc)
                    push_vertex(z)
                    push_vertex(u)
                    events.append(DeviationEvent(vertical_index=j, arc_index=m,
                                                 side=side,
                                                 base_point=(float(u[0]),
                                                             float(u[1])),
                                                 case="ii"))
                    return ("continue", arc, new_free)
    return None


# --- eventual periodicity -------------------------------------------------------


def detect_eventual_periodicity(line: Polyline, events, n_range=(1, 64),
                                tol: float = 1e-9):
    """Minimal-|N| repetition of a deviation label across verticals.

    Scans the event log for two events with the same (arc index, side) at
    verticals i and i + N, returns (N, W0) where W0 is the sub-polyline
    between the two base points, after checking W0 meets W0 + (N, 0) in a
    single point.  None when no repetition lies in range.
    """
    labelled: dict = {}
    for ev in events:
        labelled.setdefault((ev.arc_index, ev.side), []).append(ev)
    best = None
    for evs in labelled.values():
        for i in range(len(evs)):
            for j in range(i + 1, len(evs)):
                N = evs[j].vertical_index - evs[i].vertical_index
                if N == 0 or not (n_range[0] <= abs(N) <= n_range[1]):
                    continue
                if best is None or abs(N) < abs(best[0]):
                    best = (N, evs[i], evs[j])
    if best is None:
        return None
    N, e0, e1 = best
    verts = line.vertices
    cs = Polyline(verts).arclengths()

    def locate(pt):
        pt = np.asarray(pt, float)
        dists = np.hypot(verts[:, 0] - pt[0], verts[:, 1] - pt[1])
        i = int(np.argmin(dists))
        if dists[i] > 1e-6:
            return None
        return cs[i]

    s0 = locate(e0.base_point)
    s1 = locate(e1.base_point)
    if s0 is None or s1 is None:
        return N, None
    W0 = Polyline(verts).subarc(min(s0, s1), max(s0, s1))
    shifted = W0.translated(N, 0.0)
    pts = [pt for pt, _, _ in geom.polyline_crossings(W0, shifted)]
    if not pts:
        # near-touch within tolerance counts as the meeting point
        best = (math.inf, None)
        for a0, a1 in W0.segments():
            for b0, b1 in shifted.segments():
                contact, d = geom.segment_closest_points(a0, a1, b0, b1)
                if d < best[0]:
                    best = (d, contact)
        if best[0] < tol:
            pts = [best[1]]
    clusters = []
    for pt in pts:
        if all(float(np.hypot(*(pt - q))) > tol for q in clusters):
            clusters.append(pt)
    if len(clusters) != 1:
        return N, None
    return N, W0
