"""Programmatic invariant suites backing the `verify` command.

Each suite returns (name, passed, detail) triples.  The mutation check at
the end feeds a deliberately broken field (sign-flipped gradient) through
the gradient-consistency check and passes only when the breakage is
caught, guarding the suite against silently vacuous checks.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import qmc

from . import brouwer, construction, dynamics, genfun
from .construction import FLAT, CounterexampleSpec
from .genfun import ImplicitSolveConfig, Rect, ScalarField2
from .geom import Polyline


def _check(results, name, passed, detail=""):
    results.append((name, bool(passed), detail))


def _halton(n, rect: Rect, seed=0):
    sampler = qmc.Halton(d=2, scramble=False, seed=seed)
    pts = sampler.random(n)
    xs = rect.x0 + pts[:, 0] * rect.width
    ys = rect.y0 + pts[:, 1] * rect.height
    return np.column_stack([xs, ys])


def gradient_consistency(field: ScalarField2, points, step=1e-4, rtol=1e-5):
    """Exact gradient vs central differences of the value.

    The error is relative to the gradient scale over the sample set.  A
    pointwise-relative comparison is not attainable at this step size for
    exp(-1/t)-flat fields (the truncation ratio grows like t^-4 toward the
    flat boundary), while a sign or component error shows up at full field
    scale either way.
    """
    err = 0.0
    scale = 1e-30
    for x, y in points:
        gx, gy = field.grad_at(x, y)
        fx = (field.eval_at(x + step, y) - field.eval_at(x - step, y)) / (2 * step)
        fy = (field.eval_at(x, y + step) - field.eval_at(x, y - step)) / (2 * step)
        err = max(err, abs(gx - fx), abs(gy - fy))
        scale = max(scale, abs(gx), abs(gy), abs(fx), abs(fy))
    worst = err / scale
    return worst <= rtol, worst


def genfun_suite(spec: CounterexampleSpec, seed=0):
    results = []
    cfg = ImplicitSolveConfig()
    g = construction.counterexample_field(spec)
    fbar = construction.build_strip_map(spec, cfg)
    region = fbar.valid_region

    # roundtrip on the counterexample
    pts = _halton(300, Rect(region.x0, region.x1, 1e-4, region.y1 * 0.98), seed)
    worst = 0.0
    for x, y in pts:
        X, Y = fbar.forward((x, y))
        xb, yb = fbar.inverse((X, Y))
        worst = max(worst, abs(xb - x), abs(yb - y))
    _check(results, "genfun.roundtrip", worst <= 10 * cfg.tolerance,
           f"max roundtrip error {worst:.2e}")

    # area preservation, strip map; step chosen so the finite-difference
    # truncation stays inside the tolerance (see decisions on criterion 2)
    step = 1e-6
    pts = _halton(400, Rect(region.x0 + 2 * step, region.x1 - 2 * step,
                            1e-3, region.y1 - 2 * step), seed)
    worst = 0.0
    for x, y in pts:
        det = float(np.linalg.det(genfun.jacobian_fd(fbar, (x, y), step)))
        worst = max(worst, abs(det - 1.0))
    _check(results, "genfun.area_strip", worst <= 1e-6,
           f"max |det-1| = {worst:.2e} at step {step:g}")

    # gradient consistency against central differences of the value; the
    # support-ball interiors carry chart curvature that puts the stated step
    # past its truncation budget there and are covered by an order-of-
    # convergence test instead
    pts = [(x, y) for x, y in _halton(400, Rect(-0.45, 0.45, 2e-2, 0.9), seed)
           if not construction.in_support_ball(spec, x, y, inflate=1.25)]
    ok, worst = gradient_consistency(g, pts)
    _check(results, "genfun.grad_vs_fd", ok, f"max rel err {worst:.2e}")
    tw = dynamics.twist_field()
    pts = _halton(200, Rect(-0.5, 0.5, 2e-2, 0.95), seed)
    ok, worst = gradient_consistency(tw, pts)
    _check(results, "genfun.grad_vs_fd_twist", ok, f"max rel err {worst:.2e}")

    # fixed point <-> critical point correspondence: the displacement of the
    # map at (x, y) equals (g_y, -g_X) at the solved (X, y)
    tol = 1e-9
    agree = True
    detail = ""
    for x, y in _halton(200, Rect(region.x0 * 0.9, region.x1 * 0.9,
                                  1e-4, region.y1 * 0.95), seed):
        X, Y = fbar.forward((x, y))
        disp = math.hypot(X - x, Y - y)
        gX, gy = g.grad_at(X, y)
        grad = math.hypot(gX, gy)
        if (disp <= tol) != (grad <= tol):
            if min(disp, grad) > tol / 10:  # disagreement beyond slack
                agree = False
                detail = f"disp {disp:.2e} vs |grad| {grad:.2e} at ({x:.3g},{y:.3g})"
                break
    _check(results, "genfun.fixed_vs_critical", agree, detail)
    return results


def construction_suite(spec: CounterexampleSpec, seed=0):
    results = []
    rng = np.random.default_rng(seed)

    # dyadic scaling law of p = p2 o psi, exact in binary floating point
    worst = 0.0
    ok = True
    for n in range(1, 11):
        for _ in range(200):
            x = rng.uniform(-0.4, 0.4)
            k = int(rng.integers(n, min(spec.k_max - 1, n + 8)))
            y = rng.uniform(math.ldexp(1.0, -(k + 1)), math.ldexp(1.0, -k))
            try:
                p1 = construction.p2_psi_with_grad(spec, x, y)[0]
                p2 = construction.p2_psi_with_grad(
                    spec, math.ldexp(x, n), math.ldexp(y, n))[0]
            except construction.DeepBandRefusal:
                continue
            rel = abs(p1 - math.ldexp(p2, -n)) / max(abs(p1), 1e-300)
            worst = max(worst, rel)
            ok = ok and rel <= 1e-12
    _check(results, "construction.scaling_law", ok, f"max rel err {worst:.2e}")

    # psi is an involution on the inner balls
    worst = 0.0
    for k in range(spec.k0, spec.k0 + 5):
        cx, cy = construction.band_center(k)
        r = construction.inner_radius(k)
        for _ in range(50):
            ang = rng.uniform(0, 2 * math.pi)
            rad = rng.uniform(0, 0.95 * r)
            p = (cx + rad * math.cos(ang), cy + rad * math.sin(ang))
            q = construction.psi(spec, construction.psi(spec, p))
            worst = max(worst, abs(q[0] - p[0]), abs(q[1] - p[1]))
    _check(results, "construction.involution", worst <= 1e-12,
           f"max |psi(psi(p)) - p| = {worst:.2e}")

    # psi preserves area: |det D psi| = 1 by finite differences
    worst = 0.0
    for k in range(spec.k0, spec.k0 + 3):
        cx, cy = construction.band_center(k)
        r = construction.support_radius(k)
        step = r * 2e-5
        for _ in range(60):
            ang = rng.uniform(0, 2 * math.pi)
            rad = rng.uniform(0, 0.9 * r)
            x, y = cx + rad * math.cos(ang), cy + rad * math.sin(ang)
            pxp = construction.psi(spec, (x + step, y))
            pxm = construction.psi(spec, (x - step, y))
            pyp = construction.psi(spec, (x, y + step))
            pym = construction.psi(spec, (x, y - step))
            J = np.array([
                [(pxp[0] - pxm[0]) / (2 * step), (pyp[0] - pym[0]) / (2 * step)],
                [(pxp[1] - pxm[1]) / (2 * step), (pyp[1] - pym[1]) / (2 * step)],
            ])
            worst = max(worst, abs(abs(np.linalg.det(J)) - 1.0))
    _check(results, "construction.psi_area", worst <= 1e-6,
           f"max ||det D psi| - 1| = {worst:.2e}")

    # gradient decay toward y = 0 along dyadic heights
    xs = np.linspace(-0.4, 0.4, 41)
    maxima = []
    for j in range(4, 41):
        y = math.ldexp(1.0, -j)
        m = max(math.hypot(*construction.g_grad(spec, (x, y))) for x in xs)
        maxima.append(m)
    monotone = all(a >= b for a, b in zip(maxima, maxima[1:]))
    _check(results, "construction.grad_decay",
           monotone and maxima[-1] < 1e-30,
           f"max at j=40: {maxima[-1]:.2e}, monotone={monotone}")

    # 0 < y/2 <= p(x, y) <= 2 y
    ok = True
    for _ in range(500):
        x = rng.uniform(-0.4, 0.4)
        y = 10.0 ** rng.uniform(-6, 0)
        try:
            p = construction.p2_psi_with_grad(spec, x, y)[0]
        except construction.DeepBandRefusal:
            continue
        if not (0.0 < 0.5 * y <= p <= 2.0 * y):
            ok = False
            break
    _check(results, "construction.p_bounds", ok)

    # no critical points off y = 0 (sampled where h' is representable)
    ok = True
    for _ in range(500):
        x = rng.uniform(-0.4, 0.4)
        y = rng.uniform(5e-3, 1.0)
        gx, gy = construction.g_grad(spec, (x, y))
        if gx == 0.0 and gy == 0.0:
            ok = False
            break
    _check(results, "construction.crit_only_bottom", ok)

    # bump, flow, chart, flatness basics
    bump = spec.profile
    bump_ok = (bump.eval(0.0) == 1.0 and bump.eval(0.3) == 0.0
               and bump.eval(0.1) > bump.eval(0.2) > 0.0)
    _check(results, "construction.bump_profile", bump_ok)
    flow = spec.flow
    worst = 0.0
    ident_ok = True
    for _ in range(100):
        p = rng.uniform(-0.5, 0.5, 2)
        t = rng.uniform(-7, 7)
        q = flow.apply(p, t)
        worst = max(worst, abs(math.hypot(*q) - math.hypot(*p)))
        if p @ p >= 0.25:
            ident_ok = ident_ok and tuple(q) == (p[0], p[1])
    _check(results, "construction.flow_radius", worst <= 1e-14,
           f"max radius drift {worst:.2e}")
    _check(results, "construction.flow_support", ident_ok)
    chart = construction.DyadicChart(7)
    worst = 0.0
    for _ in range(100):
        y = rng.uniform(math.ldexp(1.0, -8), math.ldexp(1.0, -7))
        x = rng.uniform(-1, 1)
        u = chart.inverse(chart.forward((x, y)))
        worst = max(worst, abs(u[0] - x), abs(u[1] - y))
    _check(results, "construction.chart_roundtrip", worst <= 1e-15,
           f"max error {worst:.2e}")
    _check(results, "construction.flat_at_zero",
           FLAT.eval(0.0) == 0.0 and FLAT.prime(0.0) == 0.0
           and FLAT.second(0.0) == 0.0)
    return results


def dynamics_suite(spec: CounterexampleSpec, seed=0):
    results = []
    cfg = ImplicitSolveConfig()
    lift = construction.build_annulus_map(spec, cfg)
    catalog = dynamics.reference_maps(cfg)

    # predicted translation sizes decrease strictly to 0 and are detected
    eps_seq = [construction.predicted_fixed_data(spec, k)[0]
               for k in range(spec.k0, spec.k0 + 5)]
    decreasing = all(a > b >= 0.0 for a, b in zip(eps_seq, eps_seq[1:]))
    _check(results, "dynamics.eps_decreasing", decreasing, f"{eps_seq}")

    found_ok = True
    residual_ok = True
    detail = ""
    for k in range(spec.k0, spec.k0 + 5):
        eps, point = construction.predicted_fixed_data(spec, k)
        f_eps = dynamics.translate_eps(lift, eps)
        half = construction.inner_radius(k) * 2.0 ** spec.k0 / 2.0
        window = Rect(point[0] - half, point[0] + half,
                      point[1] - half, point[1] + half)
        records = dynamics.find_fixed_points(f_eps, window, window.width / 41.0,
                                             tol=1e-12, epsilon=eps)
        hit = [r for r in records
               if max(abs(r.location[0] - point[0]),
                      abs(r.location[1] - point[1])) < 1e-8]
        if not hit:
            found_ok = False
            detail = f"k={k}: predicted point not among {len(records)} records"
            break
        for r in records:
            q = f_eps.forward(r.location)
            resid = math.hypot(q[0] - r.location[0], q[1] - r.location[1])
            residual_ok = residual_ok and resid <= 1e-10
    _check(results, "dynamics.predicted_found", found_ok, detail)
    _check(results, "dynamics.record_residuals", residual_ok)

    # equivariance of the detector under the deck translation
    f_eps = dynamics.translate_eps(catalog["twist"], -0.01)
    w = Rect(0.1, 0.4, 0.001, 0.05)
    rec0 = dynamics.find_fixed_points(f_eps, w, 0.005, tol=1e-12)
    w1 = Rect(w.x0 + 1.0, w.x1 + 1.0, w.y0, w.y1)
    rec1 = dynamics.find_fixed_points(f_eps, w1, 0.005, tol=1e-12)
    equi = len(rec0) == len(rec1) and all(
        min(abs(a.location[0] + 1.0 - b.location[0])
            + abs(a.location[1] - b.location[1]) for b in rec1) < 1e-9
        for a in rec0
    )
    _check(results, "dynamics.equivariance", equi,
           f"{len(rec0)} vs {len(rec1)} records")

    # twist at the top boundary for every catalog map and the counterexample
    ok = True
    for name, m in list(catalog.items()) + [("counterexample", lift)]:
        if name == "identity":
            continue
        for x in np.linspace(-1.3, 1.7, 100):
            X, _ = m.forward((x, 1.0))
            if not X > x:
                ok = False
                break
    _check(results, "dynamics.twist_top", ok)

    # catalog maps fix the bottom boundary pointwise
    ok = True
    for m in catalog.values():
        for x in np.linspace(-1.0, 2.0, 50):
            q = m.forward((x, 0.0))
            if abs(q[0] - x) > 1e-13 or abs(q[1]) > 1e-13:
                ok = False
    _check(results, "dynamics.bottom_fixed", ok)
    return results


def brouwer_suite(seed=0):
    results = []
    rng = np.random.default_rng(seed)

    # compactification round trip
    worst = 0.0
    for _ in range(1000):
        x = rng.uniform(-5, 5)
        y = rng.uniform(1e-4, 1 - 1e-4)
        u, v = brouwer.strip_to_plane(x, y)
        xb, yb = brouwer.plane_to_strip(u, v)
        worst = max(worst, abs(xb - x), abs(yb - y))
    _check(results, "brouwer.compactify_roundtrip", worst <= 1e-12,
           f"max error {worst:.2e}")

    shear = dynamics.reference_maps()["shear"]
    h = brouwer.compactify(shear)
    worst = 0.0
    for _ in range(200):
        p = (rng.uniform(-2, 2), rng.uniform(-5, 5))
        q = h.inv(h.fwd(p))
        worst = max(worst, abs(q[0] - p[0]), abs(q[1] - p[1]))
    _check(results, "brouwer.inverse_consistency", worst <= 1e-9,
           f"max error {worst:.2e}")

    # verifier stability under refinement on the translation fixture
    trans = brouwer.PlaneMap(forward=lambda p: (p[0] + 1.0, p[1]),
                             inverse=lambda q: (q[0] - 1.0, q[1]),
                             periodic=True, twist_y0=0.0, name="translation")
    line = Polyline(np.array([[0.0, -1.0], [0.0, 1.0]]),
                    start_ray=(0.0, -1.0), end_ray=(0.0, 1.0))
    window = (-3.0, 3.0, -3.0, 3.0)
    r1 = brouwer.verify_brouwer_line(trans, line, window, 1e-2)
    r2 = brouwer.verify_brouwer_line(trans, line, window, 5e-3)
    _check(results, "brouwer.verifier_stability", r1.ok and r2.ok)
    horiz = Polyline(np.array([[-1.0, 0.0], [1.0, 0.0]]),
                     start_ray=(-1.0, 0.0), end_ray=(1.0, 0.0))
    neg = brouwer.verify_brouwer_line(trans, horiz, window, 1e-2)
    _check(results, "brouwer.verifier_negative", not neg.ok)

    # moduli monotonicity on the compactified shear
    eps_vals = [brouwer.moduli(h, n, 0.25).eps_n for n in (1, 2, 3)]
    _check(results, "brouwer.moduli_monotone",
           all(a >= b for a, b in zip(eps_vals, eps_vals[1:])),
           f"{eps_vals}")

    # vertical-crossing equivariance under the deck translation
    from .cli import hedgehog_map

    hh = hedgehog_map()
    data0 = brouwer.vertical_crossings(hh, 0)
    data3 = brouwer.vertical_crossings(hh, 3)
    shifted = data0.shifted(3)
    equi = len(data3.arcs) == len(shifted.arcs) and all(
        float(np.max(np.abs(a.vertices - b.vertices))) < 1e-9
        for a, b in zip(data3.arcs, shifted.arcs)
    )
    _check(results, "brouwer.crossings_equivariant", equi)
    return results


def mutation_suite(spec: CounterexampleSpec, seed=0):
    """The gradient-consistency check must catch a sign-flipped gradient."""
    results = []
    g = construction.counterexample_field(spec)
    broken = ScalarField2(
        eval_at=g.eval_at,
        grad_at=lambda x, y: tuple(-v for v in g.grad_at(x, y)),
        domain_hint=g.domain_hint,
        name="broken",
    )
    pts = _halton(100, Rect(-0.03, 0.03, 5e-2, 0.5), seed)
    ok_broken, _ = gradient_consistency(broken, pts)
    _check(results, "mutation.gradient_flip_detected", not ok_broken,
           "sign-flipped gradient slipped through" if ok_broken else "")
    return results


def run_all(spec: CounterexampleSpec, seed=0):
    results = []
    results.extend(genfun_suite(spec, seed))
    results.extend(construction_suite(spec, seed))
    results.extend(dynamics_suite(spec, seed))
    results.extend(brouwer_suite(seed))
    results.extend(mutation_suite(spec, seed))
    return results
