"""The smooth-but-not-analytic counterexample map, built from scratch.

Ingredients, assembled bottom-up:

* a C-infinity bump profile rho on [0, inf) with rho = 1 on [0, 1/16],
  rho = 0 on [1/4, inf), strictly decreasing between;
* the rotation flow of the vector field rho(x^2+y^2) * (-y, x), which is an
  exact rotation by angle t*rho(r^2) on each circle (the angular speed is
  constant along orbits, so no ODE integration is ever needed);
* dyadic band charts t_k(x, y) = (2^(k+2) x, 2^(k+2) y - 3) sending the band
  R x (2^-(k+1), 2^-k] onto R x (-1, 1];
* the piecewise map psi = t_k^-1 o (half-turn flow) o t_k on each band,
  identity on y = 0, supported in balls of radius 2^-(k+3) around
  p_k = (0, 3*2^-(k+2));
* the flat function h(t) = exp(-1/t), h(0) = 0;
* the generating correction g = h o p2 o psi with exact chain-rule gradient.

The strip map associated to g (through `genfun`) fixes y = 0 pointwise,
translates each dyadic line y = 2^-k right by s_k = h'(2^-k), and maps
(m_k, 3*2^-(k+2)) to p_k where m_k = h'(3*2^-(k+2)).  Rescaling by 2^k0 and
gluing x = -1/2 to x = 1/2 yields an annulus diffeomorphism whose lift,
translated right by eps_k = 2^k0 * m_k, has interior fixed points for every
k, with eps_k strictly decreasing to 0.

Exactness notes: dyadic scalings are exact in binary floating point, so psi
is the exact identity outside the support balls and the dyadic scaling law
p(x, y) = 2^-n p(2^n x, 2^n y) holds with zero rounding error.  h and h'
underflow to zero for small arguments; that is accepted and documented in
the comparisons that meet it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import dynamics, genfun
from .genfun import ImplicitSolveConfig, Rect, ScalarField2, StripMap


class ContractionFailure(RuntimeError):
    """Sampled sup |g_yX| >= 1/2 on the requested region; raise k0."""


class GluingMismatch(RuntimeError):
    """Edge values at x = +-1/2 disagree; support balls leak, raise k0."""


class DeepBandRefusal(ValueError):
    """Point inside a support ball deeper than k_max; not representable."""


# --- bump profile -----------------------------------------------------------

BUMP_INNER = 1.0 / 16.0
BUMP_OUTER = 1.0 / 4.0
_BUMP_WIDTH = BUMP_OUTER - BUMP_INNER


def _q(u: float) -> float:
    """exp(-1/u) extended by 0 for u <= 0; the standard mollifier kernel."""
    if u <= 0.0:
        return 0.0
    return math.exp(-1.0 / u)


def _q_prime(u: float) -> float:
    if u <= 0.0:
        return 0.0
    e = math.exp(-1.0 / u)
    if e == 0.0:
        return 0.0
    return e / (u * u)


@dataclass(frozen=True)
class BumpProfile:
    """Radial profile rho(s) of the rotation speed, as a function of r^2."""

    eval: Callable[[float], float]
    eval_prime: Callable[[float], float]


def make_bump() -> BumpProfile:
    """Exponential blend q(u)/(q(u)+q(1-u)) on u = (1/4 - s)/(3/16).

    Flat at both junctions, strictly monotone inside, so rho' < 0 exactly on
    (1/16, 1/4) and rho is identically 1 and 0 outside.
    """

    def rho(s: float) -> float:
        u = (BUMP_OUTER - s) / _BUMP_WIDTH
        if u >= 1.0:
            return 1.0
        if u <= 0.0:
            return 0.0
        a = _q(u)
        b = _q(1.0 - u)
        return a / (a + b)

    def rho_prime(s: float) -> float:
        u = (BUMP_OUTER - s) / _BUMP_WIDTH
        if u >= 1.0 or u <= 0.0:
            return 0.0
        a, b = _q(u), _q(1.0 - u)
        ap, bp = _q_prime(u), _q_prime(1.0 - u)
        dblend = (ap * b + a * bp) / (a + b) ** 2
        return -dblend / _BUMP_WIDTH

    return BumpProfile(eval=rho, eval_prime=rho_prime)


# --- rotation flow ----------------------------------------------------------


@dataclass(frozen=True)
class RotationFlow:
    """Time-t map of rho(x^2+y^2)*(-y, x): rotation by t*rho(r^2).

    The field is tangent to circles with angular speed rho(r^2), constant
    along each orbit, so the flow is the exact closed-form rotation; points
    with r^2 >= 1/4 never move.
    """

    profile: BumpProfile

    def apply(self, p, t: float):
        x, y = float(p[0]), float(p[1])
        theta = t * self.profile.eval(x * x + y * y)
        if theta == 0.0:
            return (x, y)
        c, s = math.cos(theta), math.sin(theta)
        return (x * c - y * s, x * s + y * c)

    def jacobian(self, p, t: float) -> np.ndarray:
        """D phi_t = R(theta) + (R'(theta) z) (grad theta)^T, exact."""
        x, y = float(p[0]), float(p[1])
        s2 = x * x + y * y
        theta = t * self.profile.eval(s2)
        c, s = math.cos(theta), math.sin(theta)
        dth = t * self.profile.eval_prime(s2)
        rot = np.array([[c, -s], [s, c]])
        if dth == 0.0:
            return rot
        rpz = np.array([-s * x - c * y, c * x - s * y])
        grad_theta = np.array([2.0 * x * dth, 2.0 * y * dth])
        return rot + np.outer(rpz, grad_theta)


def flow_apply(fl: RotationFlow, p, t: float):
    return fl.apply(p, t)


# --- dyadic charts ----------------------------------------------------------


@dataclass(frozen=True)
class DyadicChart:
    """(x, y) -> (2^(k+2) x, 2^(k+2) y - 3), band k onto R x (-1, 1]."""

    k: int

    def forward(self, p):
        x, y = p
        sc = self.k + 2
        return (math.ldexp(float(x), sc), math.ldexp(float(y), sc) - 3.0)

    def inverse(self, q):
        u, v = q
        sc = self.k + 2
        return (math.ldexp(float(u), -sc), math.ldexp(float(v) + 3.0, -sc))


def band_index(y: float) -> int:
    """The k with y in (2^-(k+1), 2^-k], for y in (0, 1]."""
    if not 0.0 < y <= 1.0:
        raise genfun.OutOfDomain(f"y = {y} not in (0, 1]")
    m, e = math.frexp(y)  # y = m * 2^e, m in [0.5, 1)
    return 1 - e if m == 0.5 else -e


def band_center(k: int) -> tuple:
    """p_k = (0, 3*2^-(k+2)), the support ball center of band k."""
    return (0.0, math.ldexp(3.0, -(k + 2)))


def support_radius(k: int) -> float:
    return math.ldexp(1.0, -(k + 3))


def inner_radius(k: int) -> float:
    """Radius of the ball on which psi is the exact point reflection."""
    return math.ldexp(1.0, -(k + 4))


# --- flat function ----------------------------------------------------------


@dataclass(frozen=True)
class FlatFunction:
    """h(t) = exp(-1/t) for t > 0, flat to all orders at t = 0.

    Derivatives have the shape exp(-1/t) * P(t)/Q(t); the first two are
    spelled out.  Underflow of exp(-1/t) to zero is accepted (and guarded so
    no 0/0 appears for tiny t).
    """

    def eval(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        return math.exp(-1.0 / t)

    def prime(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        e = math.exp(-1.0 / t)
        if e == 0.0:
            return 0.0
        return e / (t * t)

    def second(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        e = math.exp(-1.0 / t)
        if e == 0.0:
            return 0.0
        return e * (1.0 - 2.0 * t) / (t ** 4)


FLAT = FlatFunction()


# --- counterexample spec and psi --------------------------------------------


@dataclass(frozen=True)
class CounterexampleSpec:
    """Parameters of the glued counterexample.

    k0 is the dyadic rescaling exponent (the strip map on
    [-2^-(k0+1), 2^-(k0+1)] x [0, 2^-k0] is blown up to [-1/2, 1/2] x [0, 1]);
    k_max the deepest band whose support ball is materialized.  Beyond k_max
    the map is the exact closed form g = h(y) outside the (sub-resolution)
    balls, and points inside deeper balls are refused rather than
    approximated.
    """

    k0: int = 4
    k_max: int = 24
    profile: BumpProfile = field(default_factory=make_bump)

    def __post_init__(self):
        if self.k0 < 1:
            raise ValueError("k0 must be positive")
        if self.k_max < self.k0 + 2:
            raise ValueError("k_max must be at least k0 + 2")

    @property
    def flow(self) -> RotationFlow:
        return RotationFlow(self.profile)

    def strip_region(self) -> Rect:
        half = math.ldexp(1.0, -(self.k0 + 1))
        return Rect(-half, half, 0.0, math.ldexp(1.0, -self.k0))


def _outside_ball(k: int, x: float, y: float) -> bool:
    cx, cy = band_center(k)
    r = support_radius(k)
    dx = abs(x - cx)
    dy = abs(y - cy)
    if dx > r or dy > r:
        return True
    return dx * dx + dy * dy > r * r


def in_support_ball(spec: CounterexampleSpec, x: float, y: float,
                    inflate: float = 1.0) -> bool:
    """Whether (x, y) lies inside the (inflated) support ball of its band."""
    if not 0.0 < y <= 1.0:
        return False
    k = band_index(y)
    cx, cy = band_center(k)
    r = support_radius(k) * inflate
    dx, dy = x - cx, y - cy
    return dx * dx + dy * dy <= r * r


def psi(spec: CounterexampleSpec, p):
    """The band-wise conjugated half turn; identity on y = 0 and off supports."""
    x, y = float(p[0]), float(p[1])
    if y == 0.0:
        return (x, y)
    k = band_index(y)
    if k > spec.k_max:
        if _outside_ball(k, x, y):
            return (x, y)
        raise DeepBandRefusal(
            f"point ({x}, {y}) inside support ball of band {k} > k_max = {spec.k_max}"
        )
    chart = DyadicChart(k)
    z = chart.forward((x, y))
    w = spec.flow.apply(z, math.pi)
    return chart.inverse(w)


def p2_psi_with_grad(spec: CounterexampleSpec, x: float, y: float):
    """p = p2(psi(x, y)) together with its exact gradient.

    The chart scalings cancel in the chain rule, so D psi at a strip point
    equals D phi_pi at the chart point; grad p is its second row.
    """
    x, y = float(x), float(y)
    if y == 0.0:
        return 0.0, 0.0, 1.0
    k = band_index(y)
    if k > spec.k_max:
        if _outside_ball(k, x, y):
            return y, 0.0, 1.0
        raise DeepBandRefusal(
            f"point ({x}, {y}) inside support ball of band {k} > k_max = {spec.k_max}"
        )
    chart = DyadicChart(k)
    z = chart.forward((x, y))
    w = spec.flow.apply(z, math.pi)
    pval = chart.inverse(w)[1]
    jac = spec.flow.jacobian(z, math.pi)
    return pval, float(jac[1, 0]), float(jac[1, 1])


def g_eval(spec: CounterexampleSpec, p) -> float:
    """g = h o p2 o psi."""
    pval, _, _ = p2_psi_with_grad(spec, p[0], p[1])
    return FLAT.eval(pval)


def g_grad(spec: CounterexampleSpec, p):
    """Exact chain-rule gradient h'(p) * grad p."""
    pval, px, py = p2_psi_with_grad(spec, p[0], p[1])
    hp = FLAT.prime(pval)
    return (hp * px, hp * py)


def counterexample_field(spec: CounterexampleSpec) -> ScalarField2:
    return ScalarField2(
        eval_at=lambda x, y: g_eval(spec, (x, y)),
        grad_at=lambda x, y: g_grad(spec, (x, y)),
        domain_hint=Rect(-1e18, 1e18, 0.0, 1.0),
        name=f"counterexample(k0={spec.k0})",
    )


def s_k(k: int) -> float:
    """Top-of-band shift h'(2^-k)."""
    return FLAT.prime(math.ldexp(1.0, -k))


def m_k(k: int) -> float:
    """Ball-center translation size h'(3*2^-(k+2))."""
    return FLAT.prime(math.ldexp(3.0, -(k + 2)))


# --- assembled maps ---------------------------------------------------------


def build_strip_map(
    spec: CounterexampleSpec, cfg: ImplicitSolveConfig = genfun.DEFAULT_CONFIG
) -> StripMap:
    """The local map of g on [-2^-(k0+1), 2^-(k0+1)] x [0, 2^-k0].

    The region is certified by the sampled contraction bound; the dominant
    contribution to sup |g_yX| comes from the shallowest support ball, so the
    sampling also targets the balls of bands k0 .. k0+4 explicitly.
    """
    g = counterexample_field(spec)
    region = spec.strip_region()
    extra = []
    for k in range(spec.k0, spec.k0 + 5):
        cx, cy = band_center(k)
        r = support_radius(k)
        for a in np.linspace(-r, r, 13):
            for b in np.linspace(-r, r, 13):
                yy = cy + b
                if 0.0 < yy <= region.y1:
                    extra.append((cx + a, yy))
    sup = genfun.mixed_partial_sup(g, region, nx=41, ny=41, extra_points=extra)
    if sup >= genfun.CONTRACTION_BOUND:
        raise ContractionFailure(
            f"sampled sup|g_yX| = {sup:.3f} >= {genfun.CONTRACTION_BOUND} "
            f"on {region}; raise k0"
        )
    return genfun.make_strip_map(g, region, cfg, name=f"fbar(k0={spec.k0})")


def build_annulus_map(
    spec: CounterexampleSpec, cfg: ImplicitSolveConfig = genfun.DEFAULT_CONFIG
) -> "dynamics.LiftMap":
    """Rescale the strip map by 2^k0 and glue x = -1/2 to x = 1/2.

    The result is the lift of an annulus diffeomorphism: identity on y = 0,
    top boundary shifted right by 2^k0 * s_k0, deck-translation equivariant
    by construction.
    """
    fbar = build_strip_map(spec, cfg)
    k0 = spec.k0

    def forward_fundamental(x, y):
        u, v = math.ldexp(x, -k0), math.ldexp(y, -k0)
        X, Y = fbar.forward((u, v))
        return (math.ldexp(X, k0), math.ldexp(Y, k0))

    def forward(p):
        x, y = float(p[0]), float(p[1])
        n = math.floor(x + 0.5)
        X, Y = forward_fundamental(x - n, y)
        return (X + n, Y)

    def inverse(q):
        X, Y = float(q[0]), float(q[1])
        n = math.floor(X + 0.5)
        u, v = math.ldexp(X - n, -k0), math.ldexp(Y, -k0)
        x, y = genfun.solve_inverse(counterexample_field(spec), (u, v), cfg)
        return (math.ldexp(x, k0) + n, math.ldexp(y, k0))

    # gluing check: the two edge representatives of the same annulus point
    # must map consistently
    for y in np.linspace(0.0, 1.0, 33):
        left = forward_fundamental(-0.5, y)
        right = forward_fundamental(0.5, y)
        if abs(left[0] + 1.0 - right[0]) > 1e-12 or abs(left[1] - right[1]) > 1e-12:
            raise GluingMismatch(
                f"edge mismatch at y = {y}: {left} + (1,0) != {right}; raise k0"
            )

    # top-of-band y above which the map is the pure shear x + h'(y/2^k0):
    # everything above the shallowest support ball
    twist_from = math.ldexp(7.0, k0 - spec.k0 - 3)  # = 7/8 for k = k0
    return dynamics.LiftMap(
        forward=forward,
        inverse=inverse,
        x_period=1.0,
        name=f"counterexample(k0={k0})",
        twist_from_y=min(twist_from, 0.9),
    )


def predicted_fixed_data(spec: CounterexampleSpec, k: int):
    """(eps_k, fixed point) for the glued lift translated by eps_k.

    eps_k = 2^k0 * h'(3*2^-(k+2)); the point is (eps_k, 3*2^(k0-k-2)), the
    rescaled image of the band-k ball center.
    """
    if not spec.k0 <= k <= spec.k_max:
        raise ValueError(f"k = {k} outside [{spec.k0}, {spec.k_max}]")
    eps = math.ldexp(m_k(k), spec.k0)
    point = (eps, math.ldexp(3.0, spec.k0 - k - 2))
    return eps, point
