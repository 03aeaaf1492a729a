"""Area-preserving strip maps defined implicitly by generating functions.

A scalar function G(X, y) = X*y - g(X, y) on the strip R x [0, 1] defines a
map (x, y) -> (X, Y) through its partial derivatives:

    x = G_y = X - g_y(X, y),        Y = G_X = y - g_X(X, y).

When the correction term g has small mixed derivative g_yX the first
equation is a contraction in X and the map is a diffeomorphism near the
bottom boundary, fixing y = 0 pointwise.  Under this sign convention a
correction whose gradient on a horizontal line equals (0, s) shears that
line right by s, and a gradient (0, -m) at an interior point sends the
point (m, y) to (0, y); both facts are what the counterexample
construction in `construction` relies on.

The solver is a damped Newton iteration on the scalar residual
r(X) = X - g_y(X, y) - x seeded at X = x, with a bracketed fallback.
Validity of a rectangle is certified empirically by sampling |g_yX| and
requiring it below 1/2 (a sufficient contraction bound).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq


class NonConvergence(RuntimeError):
    """Implicit solve exceeded max_iterations; shrink the region or raise k0."""


class OutOfDomain(ValueError):
    pass


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle [x0, x1] x [y0, y1]."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x0 <= self.x1 and self.y0 <= self.y1):
            raise ValueError("degenerate rectangle")

    def contains(self, x: float, y: float, margin: float = 0.0) -> bool:
        return (
            self.x0 + margin <= x <= self.x1 - margin
            and self.y0 + margin <= y <= self.y1 - margin
        )

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def as_tuple(self):
        return (self.x0, self.x1, self.y0, self.y1)


@dataclass(frozen=True)
class ScalarField2:
    """Smooth scalar field on (a rectangle of) the strip with exact gradient.

    `eval_at(x, y)` returns the value, `grad_at(x, y)` the exact first
    partials (d/dx, d/dy).  The gradient must agree with central finite
    differences of `eval_at` to O(step^2) at interior points.
    """

    eval_at: Callable[[float, float], float]
    grad_at: Callable[[float, float], tuple]
    domain_hint: Rect
    name: str = ""


@dataclass(frozen=True)
class ImplicitSolveConfig:
    tolerance: float = 1e-12
    max_iterations: int = 50
    initial_guess_policy: str = "seed-at-x"

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.initial_guess_policy not in ("seed-at-x", "seed-at-previous"):
            raise ValueError(f"unknown policy {self.initial_guess_policy!r}")


@dataclass(frozen=True)
class StripMap:
    """Invertible map of the strip with explicit validity rectangle."""

    forward: Callable[[float, float], tuple]
    inverse: Callable[[float, float], tuple]
    valid_region: Rect
    periodic_in_x: float | None = None
    name: str = ""


DEFAULT_CONFIG = ImplicitSolveConfig()

# Mixed-partial bound below which X -> x + g_y(X, y) is a certified
# contraction on a rectangle (factor < 1/2 per iteration).
CONTRACTION_BOUND = 0.5


def _grad_y(g: ScalarField2, X: float, y: float) -> float:
    return g.grad_at(X, y)[1]


def solve_forward(
    g: ScalarField2,
    p,
    cfg: ImplicitSolveConfig = DEFAULT_CONFIG,
    seed: float | None = None,
):
    """Forward map (x, y) -> (X, Y) of the generating function G = Xy - g.

    Solves x = X - g_y(X, y) for X by damped Newton seeded at X = x (or at
    `seed` under the seed-at-previous policy), then sets Y = y - g_X(X, y).
    Raises NonConvergence when the iteration fails: the usual cause is a
    region too large for the contraction, so callers shrink it (in the
    counterexample: raise k0).
    """
    x, y = float(p[0]), float(p[1])
    if not g.domain_hint.contains(x, y):
        raise OutOfDomain(f"({x}, {y}) outside domain hint of {g.name or 'field'}")

    if cfg.initial_guess_policy == "seed-at-previous" and seed is not None:
        X = float(seed)
    else:
        X = x

    fd_step = 1e-7 * (1.0 + abs(x))
    r = X - _grad_y(g, X, y) - x
    for _ in range(cfg.max_iterations):
        if abs(r) <= cfg.tolerance:
            break
        # dr/dX = 1 - g_yX, estimated by central differences of the exact grad
        gyp = _grad_y(g, X + fd_step, y)
        gym = _grad_y(g, X - fd_step, y)
        drdX = 1.0 - (gyp - gym) / (2.0 * fd_step)
        if not math.isfinite(drdX) or abs(drdX) < 1e-3:
            drdX = 1.0
        step = -r / drdX
        lam = 1.0
        X_new, r_new = X, r
        for _ in range(8):
            X_try = X + lam * step
            r_try = X_try - _grad_y(g, X_try, y) - x
            if abs(r_try) < abs(r):
                X_new, r_new = X_try, r_try
                break
            lam *= 0.5
        if X_new == X:
            X, r = _bracketed_solve(g, x, y, cfg)
            break
        X, r = X_new, r_new
    if abs(r) > cfg.tolerance:
        X, r = _bracketed_solve(g, x, y, cfg)
        if abs(r) > cfg.tolerance:
            raise NonConvergence(
                f"residual {r:.3e} > tolerance {cfg.tolerance:.1e} at ({x}, {y})"
            )
    # polish to the numerical floor: near y = 0 the displacement scale sits
    # far below any fixed tolerance, and full Newton steps reach it exactly
    for _ in range(4):
        if r == 0.0:
            break
        X_try = X - r
        r_try = X_try - _grad_y(g, X_try, y) - x
        if abs(r_try) < abs(r):
            X, r = X_try, r_try
        else:
            break
    Y = y - g.grad_at(X, y)[0]
    return (X, Y)


def _bracketed_solve(g: ScalarField2, x: float, y: float, cfg: ImplicitSolveConfig):
    """Bracketed fallback on r(X) = X - g_y(X, y) - x.

    The bracket half-width 4*sup|g_y| (local estimate) guarantees a sign
    change since |g_y| bounds the root's distance from x.
    """
    M = max(
        abs(_grad_y(g, x, y)),
        abs(_grad_y(g, x + 1e-3, y)),
        abs(_grad_y(g, x - 1e-3, y)),
        cfg.tolerance,
    )
    half = 4.0 * M

    def resid(X):
        return X - _grad_y(g, X, y) - x

    lo, hi = x - half, x + half
    rlo, rhi = resid(lo), resid(hi)
    for _ in range(60):
        if rlo < 0.0 < rhi or rhi < 0.0 < rlo:
            break
        half *= 2.0
        lo, hi = x - half, x + half
        rlo, rhi = resid(lo), resid(hi)
    else:
        raise NonConvergence(f"no bracket for implicit solve at ({x}, {y})")
    X = brentq(resid, lo, hi, xtol=cfg.tolerance * 0.25, maxiter=200)
    return X, resid(X)


def solve_inverse(
    g: ScalarField2,
    q,
    cfg: ImplicitSolveConfig = DEFAULT_CONFIG,
):
    """Inverse map (X, Y) -> (x, y): solve Y = y - g_X(X, y) for y, then
    x = X - g_y(X, y)."""
    X, Y = float(q[0]), float(q[1])

    def resid(y):
        return y - g.grad_at(X, y)[0] - Y

    y = Y
    fd_step = 1e-7 * (1.0 + abs(Y))
    r = resid(y)
    for _ in range(cfg.max_iterations):
        if abs(r) <= cfg.tolerance:
            break
        gxp = g.grad_at(X, y + fd_step)[0]
        gxm = g.grad_at(X, y - fd_step)[0]
        drdy = 1.0 - (gxp - gxm) / (2.0 * fd_step)
        if not math.isfinite(drdy) or abs(drdy) < 1e-3:
            drdy = 1.0
        step = -r / drdy
        lam = 1.0
        y_new, r_new = y, r
        for _ in range(8):
            y_try = y + lam * step
            r_try = resid(y_try)
            if abs(r_try) < abs(r):
                y_new, r_new = y_try, r_try
                break
            lam *= 0.5
        if y_new == y:
            break
        y, r = y_new, r_new
    if abs(r) > cfg.tolerance:
        M = max(abs(g.grad_at(X, Y)[0]), cfg.tolerance)
        half = 4.0 * M
        lo, hi = Y - half, Y + half
        for _ in range(60):
            if resid(lo) * resid(hi) < 0:
                break
            half *= 2.0
            lo, hi = Y - half, Y + half
        else:
            raise NonConvergence(f"no bracket for inverse solve at ({X}, {Y})")
        y = brentq(resid, lo, hi, xtol=cfg.tolerance * 0.25, maxiter=200)
        r = resid(y)
        if abs(r) > cfg.tolerance:
            raise NonConvergence(
                f"inverse residual {r:.3e} > tolerance at ({X}, {Y})"
            )
    for _ in range(4):
        if r == 0.0:
            break
        y_try = y - r
        r_try = resid(y_try)
        if abs(r_try) < abs(r):
            y, r = y_try, r_try
        else:
            break
    x = X - g.grad_at(X, y)[1]
    return (x, y)


def jacobian_fd(m: StripMap, p, step: float) -> np.ndarray:
    """Central finite-difference Jacobian of a strip map at an interior point.

    Area preservation means the caller should see |det - 1| small.
    """
    x, y = float(p[0]), float(p[1])
    if not m.valid_region.contains(x, y, margin=step):
        raise OutOfDomain(
            f"point ({x}, {y}) within {step} of the boundary of {m.valid_region}"
        )
    fxp = m.forward((x + step, y))
    fxm = m.forward((x - step, y))
    fyp = m.forward((x, y + step))
    fym = m.forward((x, y - step))
    inv = 0.5 / step
    return np.array(
        [
            [(fxp[0] - fxm[0]) * inv, (fyp[0] - fym[0]) * inv],
            [(fxp[1] - fxm[1]) * inv, (fyp[1] - fym[1]) * inv],
        ]
    )


@dataclass(frozen=True)
class HypothesisReport:
    """One-sided derivative estimates of g on y = 0, per multi-index."""

    max_abs: dict
    step: float
    tolerance: float
    passed: bool


def check_hypothesis(
    g: ScalarField2, xs, step: float = 1e-3, tolerance: float = 1e-8
) -> HypothesisReport:
    """Estimate D^nu g on y = 0 for |nu| <= 2, one-sidedly in y (y >= 0).

    Report-only: the flatness hypothesis requires every estimate below the
    tolerance.  Values and first partials come from the field itself;
    second partials from one-sided differences of the exact gradient.
    """
    worst = {"(0,0)": 0.0, "(1,0)": 0.0, "(0,1)": 0.0,
             "(2,0)": 0.0, "(1,1)": 0.0, "(0,2)": 0.0}
    h = step
    for x in xs:
        x = float(x)
        val = g.eval_at(x, 0.0)
        gx, gy = g.grad_at(x, 0.0)
        gx_xp, _ = g.grad_at(x + h, 0.0)
        gx_xm, _ = g.grad_at(x - h, 0.0)
        gx_yp, gy_yp = g.grad_at(x, h)
        _, gy_ypp = g.grad_at(x, 2 * h)
        est = {
            "(0,0)": abs(val),
            "(1,0)": abs(gx),
            "(0,1)": abs(gy),
            "(2,0)": abs((gx_xp - gx_xm) / (2 * h)),
            "(1,1)": abs((gx_yp - gx) / h),
            "(0,2)": abs((gy_yp - gy) / h),
        }
        # refine the pure-y second derivative one-sidedly to O(h)
        est["(0,2)"] = min(est["(0,2)"], abs((gy_ypp - gy_yp) / h))
        for k, v in est.items():
            worst[k] = max(worst[k], v)
    passed = all(v <= tolerance for v in worst.values())
    return HypothesisReport(worst, step, tolerance, passed)


def mixed_partial_sup(g: ScalarField2, region: Rect, nx: int = 61, ny: int = 61,
                      extra_points=None, fd_step: float = 1e-7) -> float:
    """Sampled sup |g_yX| over a rectangle (contraction certificate input)."""
    xs = np.linspace(region.x0, region.x1, nx)
    ys = np.linspace(max(region.y0, 0.0), region.y1, ny)
    sup = 0.0
    pts = [(x, y) for x in xs for y in ys]
    if extra_points is not None:
        pts.extend((float(a), float(b)) for a, b in extra_points)
    for x, y in pts:
        gyp = g.grad_at(x + fd_step, y)[1]
        gym = g.grad_at(x - fd_step, y)[1]
        sup = max(sup, abs((gyp - gym) / (2 * fd_step)))
    return sup


def make_strip_map(
    g: ScalarField2,
    region: Rect,
    cfg: ImplicitSolveConfig = DEFAULT_CONFIG,
    periodic_in_x: float | None = None,
    name: str = "",
) -> StripMap:
    """Wrap solve_forward/solve_inverse closures over a validity rectangle."""

    def forward(p):
        return solve_forward(g, p, cfg)

    def inverse(q):
        return solve_inverse(g, q, cfg)

    return StripMap(
        forward=forward,
        inverse=inverse,
        valid_region=region,
        periodic_in_x=periodic_in_x,
        name=name or g.name,
    )


def zero_field(domain: Rect | None = None) -> ScalarField2:
    dom = domain or Rect(-1e18, 1e18, 0.0, 1.0)
    return ScalarField2(
        eval_at=lambda x, y: 0.0,
        grad_at=lambda x, y: (0.0, 0.0),
        domain_hint=dom,
        name="zero",
    )
