"""Lifts of annulus maps, rigid translations, and fixed-point detection.

A lift acts on the strip R x [0, 1], commutes with the deck translation
(x, y) -> (x+1, y), fixes the bottom boundary pointwise, and shifts the top
boundary strictly right.  The rigid perturbation adds (eps, 0).  The
detector seeds damped Newton (least-squares steps, so one-dimensional zero
sets do not break it) from grid cells where both displacement components
change sign or the displacement is already tiny, polishes converged roots
to the numerical floor, and deduplicates by distance.  Emptiness evidence
comes from grid minima of |f(z) - z| with a sampled variation modulus: a
positive margin certifies positivity between grid points at the sampled
resolution, and is reported as evidence, never as proof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import genfun
from .genfun import ImplicitSolveConfig, Rect, ScalarField2


class DisplacementVanishesOnLoop(ValueError):
    """Index is undefined: the displacement has a zero on the loop itself."""


@dataclass(frozen=True)
class LiftMap:
    """Lift of an annulus homeomorphism to the strip.

    `forward`/`inverse` act on single points (pairs).  `batch_forward`, when
    present, evaluates an (N, 2) array in one call and is used by the grid
    scanners.  `twist_from_y` is a strip height above which the map (and its
    inverse) is known to twist strictly right (left); None when unknown.
    """

    forward: Callable
    inverse: Callable
    x_period: float = 1.0
    name: str = ""
    twist_from_y: float | None = None
    batch_forward: Callable | None = None

    def displacement(self, p) -> tuple:
        q = self.forward(p)
        return (q[0] - p[0], q[1] - p[1])


@dataclass(frozen=True)
class FixedPointRecord:
    epsilon: float
    location: tuple
    residual: float
    index: int | None = None


@dataclass(frozen=True)
class EmptinessCertificate:
    epsilon: float
    min_displacement: float
    grid_step: float
    modulus_bound: float

    @property
    def margin(self) -> float:
        """Positive when the grid minimum survives the sampled variation."""
        return self.min_displacement - self.modulus_bound * self.grid_step * math.sqrt(2.0) / 2.0


@dataclass
class SweepResult:
    epsilon_grid: list
    records: list = field(default_factory=list)
    certificates: list = field(default_factory=list)

    def covered(self) -> bool:
        """Every grid epsilon carries records or a certificate."""
        eps_with = {r.epsilon for r in self.records} | {
            c.epsilon for c in self.certificates
        }
        return all(e in eps_with for e in self.epsilon_grid)


def translate_eps(f: LiftMap, eps: float) -> LiftMap:
    """The rigid perturbation f + (eps, 0)."""
    eps = float(eps)
    if eps == 0.0:
        return f
    fwd = f.forward
    inv = f.inverse

    def forward(p):
        q = fwd(p)
        return (q[0] + eps, q[1])

    def inverse(q):
        return inv((q[0] - eps, q[1]))

    batch = None
    if f.batch_forward is not None:
        base_batch = f.batch_forward

        def batch(pts):
            out = np.array(base_batch(pts), dtype=float, copy=True)
            out[:, 0] += eps
            return out

    return LiftMap(
        forward=forward,
        inverse=inverse,
        x_period=f.x_period,
        name=f"{f.name}+({eps:g},0)",
        twist_from_y=f.twist_from_y if eps >= 0.0 else None,
        batch_forward=batch,
    )


def _displacement_grid(f: LiftMap, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Displacement on the node grid, shape (ny, nx, 2)."""
    if f.batch_forward is not None:
        gx, gy = np.meshgrid(xs, ys)
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        out = np.asarray(f.batch_forward(pts), dtype=float) - pts
        return out.reshape(len(ys), len(xs), 2)
    disp = np.empty((len(ys), len(xs), 2))
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            q = f.forward((x, y))
            disp[j, i, 0] = q[0] - x
            disp[j, i, 1] = q[1] - y
    return disp


def _newton_polish(f: LiftMap, z: np.ndarray, tol: float, fd_step: float,
                   bounds, max_iter: int = 30) -> tuple | None:
    """Damped least-squares Newton on D(z) = f(z) - z from a seed.

    Returns (location, residual) or None.  After reaching `tol` the root is
    polished with full steps while the residual still strictly decreases, so
    residual ties along one-dimensional zero sets are exact and the
    deduplication below is deterministic.
    """
    x0, x1, y0, y1 = bounds
    step_cap = 2.0 * math.hypot(x1 - x0, y1 - y0)

    def disp(p):
        if not (x0 <= p[0] <= x1 and y0 <= p[1] <= y1):
            return None
        try:
            q = f.forward((p[0], p[1]))
        except Exception:
            return None
        return np.array([q[0] - p[0], q[1] - p[1]])

    def jac(p):
        out = []
        for dv in ([fd_step, 0.0], [0.0, fd_step]):
            dp = disp(p + dv)
            dm = disp(p - dv)
            if dp is None or dm is None:
                return None
            out.append((dp - dm) / (2 * fd_step))
        return np.column_stack(out)

    def newton_step(z, d):
        J = jac(z)
        if J is None or not np.all(np.isfinite(J)):
            return None
        step = np.linalg.lstsq(J, -d, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            return None
        nrm = float(np.hypot(*step))
        if nrm > step_cap:
            step *= step_cap / nrm
        return step

    z = np.array(z, dtype=float)
    d = disp(z)
    if d is None:
        return None
    nd = float(np.hypot(*d))
    for _ in range(max_iter):
        if nd <= tol:
            break
        step = newton_step(z, d)
        if step is None:
            return None
        lam = 1.0
        improved = False
        for _ in range(10):
            z_try = z + lam * step
            d_try = disp(z_try)
            if d_try is not None:
                nd_try = float(np.hypot(*d_try))
                if nd_try < nd:
                    z, d, nd = z_try, d_try, nd_try
                    improved = True
                    break
            lam *= 0.5
        if not improved:
            break
    if nd > tol:
        return None
    # polish to the numerical floor
    for _ in range(8):
        if nd == 0.0:
            break
        step = newton_step(z, d)
        if step is None:
            break
        z_try = z + step
        d_try = disp(z_try)
        if d_try is None:
            break
        nd_try = float(np.hypot(*d_try))
        if nd_try < nd:
            z, d, nd = z_try, d_try, nd_try
        else:
            break
    return (float(z[0]), float(z[1])), nd


def find_fixed_points(
    f_eps: LiftMap,
    window: Rect,
    grid_step: float,
    tol: float = 1e-12,
    epsilon: float = 0.0,
) -> list:
    """Grid-seeded Newton detection of Fix(f_eps) inside a window.

    Cells where both components of the displacement change sign across the
    corners (weakly: 0 lies in the corner range) or where the displacement
    is below 10*tol seed a least-squares Newton from the cell center.
    Converged roots are deduplicated at radius 2*grid_step, keeping the
    lowest residual (ties resolved by scan order).  An empty list is a
    valid result.  `epsilon` only labels the records.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    nx = max(1, int(round(window.width / grid_step)))
    ny = max(1, int(round(window.height / grid_step)))
    xs = np.linspace(window.x0, window.x1, nx + 1)
    ys = np.linspace(window.y0, window.y1, ny + 1)
    disp = _displacement_grid(f_eps, xs, ys)

    dx = disp[..., 0]
    dy = disp[..., 1]

    def corners(arr, j, i):
        return (arr[j, i], arr[j, i + 1], arr[j + 1, i], arr[j + 1, i + 1])

    seeds = []
    for j in range(ny):
        for i in range(nx):
            cx = corners(dx, j, i)
            cy = corners(dy, j, i)
            sign_x = min(cx) <= 0.0 <= max(cx)
            sign_y = min(cy) <= 0.0 <= max(cy)
            small = min(math.hypot(a, b) for a, b in zip(cx, cy)) < 10.0 * tol
            if (sign_x and sign_y) or small:
                seeds.append((0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])))

    pad = grid_step
    bounds = (window.x0 - pad, window.x1 + pad, window.y0 - pad, window.y1 + pad)
    fd_step = max(1e-12, 1e-3 * grid_step)
    found = []
    for seed in seeds:
        res = _newton_polish(f_eps, np.array(seed), tol, fd_step, bounds)
        if res is None:
            continue
        loc, resid = res
        if window.contains(loc[0], loc[1], margin=-grid_step):
            found.append((resid, loc))

    found.sort(key=lambda t: t[0])  # stable: ties keep scan order
    records = []
    min_sep = 2.0 * grid_step
    for resid, loc in found:
        if all(math.hypot(loc[0] - r.location[0], loc[1] - r.location[1]) >= min_sep
               for r in records):
            records.append(
                FixedPointRecord(epsilon=epsilon, location=loc, residual=resid)
            )
    return records


def min_displacement(
    f_eps: LiftMap, region: Rect, grid_step: float, epsilon: float = 0.0
) -> EmptinessCertificate:
    """Grid minimum of |f(z) - z| plus a sampled Lipschitz-style modulus.

    The modulus is the largest variation of the displacement between
    adjacent grid nodes per unit distance; a positive
    min - modulus * (cell diagonal)/2 margin certifies positivity between
    nodes at this resolution.  Evidence, not proof.
    """
    nx = max(1, int(round(region.width / grid_step)))
    ny = max(1, int(round(region.height / grid_step)))
    xs = np.linspace(region.x0, region.x1, nx + 1)
    ys = np.linspace(region.y0, region.y1, ny + 1)
    disp = _displacement_grid(f_eps, xs, ys)
    norms = np.hypot(disp[..., 0], disp[..., 1])
    value = float(norms.min())

    hx = xs[1] - xs[0] if nx > 0 else 1.0
    hy = ys[1] - ys[0] if ny > 0 else 1.0
    mod = 0.0
    if nx > 0:
        dvar = np.hypot(np.diff(disp[..., 0], axis=1), np.diff(disp[..., 1], axis=1))
        mod = max(mod, float(dvar.max()) / hx)
    if ny > 0:
        dvar = np.hypot(np.diff(disp[..., 0], axis=0), np.diff(disp[..., 1], axis=0))
        mod = max(mod, float(dvar.max()) / hy)
    return EmptinessCertificate(
        epsilon=epsilon,
        min_displacement=value,
        grid_step=max(hx, hy),
        modulus_bound=mod,
    )


def fixed_point_index(
    f_eps: LiftMap, loop, samples: int = 256, vanish_tol: float = 1e-13
) -> int:
    """Winding number of the displacement field along a simple closed loop.

    Adaptively refines until consecutive argument increments stay below
    pi/2.  Raises DisplacementVanishesOnLoop as soon as any sample's
    displacement is below `vanish_tol`: the index is undefined there.
    """
    verts = np.asarray(loop.vertices if hasattr(loop, "vertices") else loop, float)
    closed = bool(getattr(loop, "closed", True))
    if not closed:
        raise ValueError("index requires a closed loop")
    total_len = 0.0
    cum = [0.0]
    ring = np.vstack([verts, verts[:1]])
    for i in range(len(ring) - 1):
        total_len += float(np.hypot(*(ring[i + 1] - ring[i])))
        cum.append(total_len)
    cum = np.asarray(cum)

    def point_at(s):
        s = s % total_len
        i = int(np.searchsorted(cum, s, side="right")) - 1
        i = min(max(i, 0), len(cum) - 2)
        seg = cum[i + 1] - cum[i]
        t = 0.0 if seg == 0.0 else (s - cum[i]) / seg
        return ring[i] * (1 - t) + ring[i + 1] * t

    def angle_at(s):
        p = point_at(s)
        d = f_eps.displacement((p[0], p[1]))
        nd = math.hypot(d[0], d[1])
        if nd <= vanish_tol:
            raise DisplacementVanishesOnLoop(
                f"|D| = {nd:.2e} <= {vanish_tol:.1e} at {tuple(p)}"
            )
        return math.atan2(d[1], d[0])

    ts = list(np.linspace(0.0, total_len, samples, endpoint=False))
    angles = [angle_at(t) for t in ts]
    max_pts = 20000
    i = 0
    while i < len(ts):
        a0 = angles[i]
        a1 = angles[(i + 1) % len(ts)]
        delta = (a1 - a0 + math.pi) % (2 * math.pi) - math.pi
        if abs(delta) >= math.pi / 2 and len(ts) < max_pts:
            t_mid = 0.5 * (ts[i] + (ts[(i + 1) % len(ts)] if i + 1 < len(ts) else total_len))
            ts.insert(i + 1, t_mid)
            angles.insert(i + 1, angle_at(t_mid))
            continue
        i += 1
    total = 0.0
    n = len(ts)
    for i in range(n):
        a0 = angles[i]
        a1 = angles[(i + 1) % n]
        total += (a1 - a0 + math.pi) % (2 * math.pi) - math.pi
    w = total / (2 * math.pi)
    return int(round(w))


# --- reference catalog -------------------------------------------------------

TWIST_AMPLITUDE = 0.02


def twist_field(a: float = TWIST_AMPLITUDE) -> ScalarField2:
    """Generating correction of the analytic twist.

    g(X, y) = y^2/2 + a y^2 (1-y)^2 sin(2 pi X): the quadratic part is the
    unit shear, the tapered sine makes the map genuinely two-dimensional
    while keeping both boundary circles invariant and Fix = {y = 0}.
    """
    two_pi = 2.0 * math.pi

    def eval_at(X, y):
        return 0.5 * y * y + a * (y * (1 - y)) ** 2 * math.sin(two_pi * X)

    def grad_at(X, y):
        s = math.sin(two_pi * X)
        c = math.cos(two_pi * X)
        gX = two_pi * a * (y * (1 - y)) ** 2 * c
        gy = y + 2.0 * a * y * (1 - y) * (1 - 2 * y) * s
        return (gX, gy)

    return ScalarField2(
        eval_at=eval_at,
        grad_at=grad_at,
        domain_hint=Rect(-1e18, 1e18, 0.0, 1.0),
        name=f"twist(a={a})",
    )


def _twist_batch(a: float, cfg: ImplicitSolveConfig):
    two_pi = 2.0 * math.pi

    def batch(pts):
        pts = np.asarray(pts, float)
        x = pts[:, 0]
        y = pts[:, 1]
        X = x.copy()
        for _ in range(cfg.max_iterations):
            gy = y + 2.0 * a * y * (1 - y) * (1 - 2 * y) * np.sin(two_pi * X)
            X_new = x + gy
            if np.max(np.abs(X_new - X)) <= 0.25 * cfg.tolerance:
                X = X_new
                break
            X = X_new
        gX = two_pi * a * (y * (1 - y)) ** 2 * np.cos(two_pi * X)
        return np.column_stack([X, y - gX])

    return batch


def reference_maps(cfg: ImplicitSolveConfig = genfun.DEFAULT_CONFIG) -> dict:
    """Catalog of analytic lifts: identity, shear, generating-function twist.

    All fix y = 0 pointwise and (except the identity) twist the top
    boundary strictly right.
    """
    identity = LiftMap(
        forward=lambda p: (p[0], p[1]),
        inverse=lambda q: (q[0], q[1]),
        name="identity",
        twist_from_y=None,
        batch_forward=lambda pts: np.asarray(pts, float).copy(),
    )

    def shear_batch(pts):
        pts = np.asarray(pts, float)
        return np.column_stack([pts[:, 0] + pts[:, 1], pts[:, 1]])

    shear = LiftMap(
        forward=lambda p: (p[0] + p[1], p[1]),
        inverse=lambda q: (q[0] - q[1], q[1]),
        name="shear",
        twist_from_y=0.0,
        batch_forward=shear_batch,
    )

    a = TWIST_AMPLITUDE
    gfield = twist_field(a)

    def twist_forward(p):
        return genfun.solve_forward(gfield, p, cfg)

    def twist_inverse(q):
        return genfun.solve_inverse(gfield, q, cfg)

    twist = LiftMap(
        forward=twist_forward,
        inverse=twist_inverse,
        name=f"twist(a={a})",
        twist_from_y=0.0,
        batch_forward=_twist_batch(a, cfg),
    )
    return {"identity": identity, "shear": shear, "twist": twist}
