"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test prints a single PASS line on success (visible with pytest -s);
a failure carries the offending numbers in its assertion message.

Conventions fixed here once:
* the counterexample uses k0 = 4, k_max = 24;
* criterion 2 measures the glued annulus lift (the map the theorems are
  about); at finite-difference step 1e-5 the raw strip chart's fourth
  derivative scale inside the shallowest support ball puts the truncation
  at ~4e-6, while the 2^(2 k0) rescaling brings it to ~2e-8 (measured);
  the strip chart itself is checked at step 1e-6 in the genfun tests;
* criterion 7's index demonstration uses the analytic twist: the shear's
  displacement at eps < 0 vanishes on the full line y = -eps, so every
  surrounding loop meets a zero and its index is undefined, which the
  detector must (and does) report.
"""

import math

import numpy as np
import pytest
from scipy.stats import qmc

from twistlab import brouwer, construction, dynamics, genfun, verify
from twistlab.brouwer import compactify, construct_half_line, verify_brouwer_line
from twistlab.construction import CounterexampleSpec, predicted_fixed_data
from twistlab.dynamics import (
    DisplacementVanishesOnLoop,
    find_fixed_points,
    fixed_point_index,
    min_displacement,
    translate_eps,
)
from twistlab.genfun import Rect, StripMap
from twistlab.geom import Polyline, circle_polyline

K0 = 4


def h_prime(t):
    e = math.exp(-1.0 / t) if 1.0 / t < 745.0 else 0.0
    return e / (t * t) if e else 0.0


def report(n, text):
    print(f"ACCEPTANCE {n}: PASS - {text}")


def test_criterion_1_counterexample_fixed_points(spec, annulus_map):
    """k0=4, k=4..10: the detector returns a record within 1e-8 of
    (eps_k, 3*2^(k0-k-2)) with residual < 1e-10; eps_k strictly decreasing."""
    prev = math.inf
    for k in range(4, 11):
        eps, point = predicted_fixed_data(spec, k)
        assert eps == math.ldexp(h_prime(math.ldexp(3.0, -(k + 2))), K0)
        assert eps < prev, f"eps_{k} = {eps} not below eps_{k-1} = {prev}"
        prev = eps
        f_eps = translate_eps(annulus_map, eps)
        half = construction.inner_radius(k) * 2.0 ** K0 / 2.0
        window = Rect(point[0] - half, point[0] + half,
                      point[1] - half, point[1] + half)
        records = find_fixed_points(f_eps, window, window.width / 41.0,
                                    tol=1e-12, epsilon=eps)
        hits = [r for r in records
                if max(abs(r.location[0] - point[0]),
                       abs(r.location[1] - point[1])) < 1e-8]
        assert hits, f"k = {k}: no record within 1e-8 of {point}"
        assert hits[0].residual < 1e-10, f"k = {k}: residual {hits[0].residual}"
    report(1, "fixed points found at eps_k for k = 4..10, residuals < 1e-10, "
              "eps strictly decreasing to 0")


def test_criterion_2_area_preservation(annulus_map):
    """|det Df - 1| <= 1e-6 at 1e4 quasi-random interior points, y >= 1e-3,
    central finite differences at step 1e-5."""
    step = 1e-5
    m = StripMap(forward=annulus_map.forward, inverse=annulus_map.inverse,
                 valid_region=Rect(-0.5, 0.5, 0.0, 1.0))
    sampler = qmc.Halton(d=2, scramble=False, seed=0)
    pts = sampler.random(10_000)
    xs = -0.5 + 2 * step + pts[:, 0] * (1.0 - 4 * step)
    ys = 1e-3 + pts[:, 1] * (1.0 - 1e-3 - 2 * step)
    worst = 0.0
    for x, y in zip(xs, ys):
        det = float(np.linalg.det(genfun.jacobian_fd(m, (x, y), step)))
        worst = max(worst, abs(det - 1.0))
    assert worst <= 1e-6, f"max |det - 1| = {worst}"
    report(2, f"max |det Df - 1| = {worst:.2e} <= 1e-6 over 10^4 points")


def test_criterion_3_gradient_identities(spec):
    """grad g = (0, h'(2^-k)) on the band tops and (0, -h'(3*2^-(k+2))) at
    the ball centers, relative error 1e-10, k = 4..20."""
    worst = 0.0
    for k in range(4, 21):
        s_k = h_prime(math.ldexp(1.0, -k))
        gx, gy = construction.g_grad(spec, (0.37, math.ldexp(1.0, -k)))
        scale = max(s_k, 1e-300)
        err = max(abs(gx), abs(gy - s_k)) / scale
        assert err < 1e-10, f"band top k = {k}: rel err {err}"
        worst = max(worst, err)
        m_k = h_prime(math.ldexp(3.0, -(k + 2)))
        gx, gy = construction.g_grad(spec, construction.band_center(k))
        scale = max(m_k, 1e-300)
        err = max(abs(gx), abs(gy + m_k)) / scale
        assert err < 1e-10, f"ball center k = {k}: rel err {err}"
        worst = max(worst, err)
    report(3, f"gradient identities hold for k = 4..20, max rel err {worst:.1e}")


def test_criterion_4_scaling_law(spec):
    """p(x, y) = 2^-n p(2^n x, 2^n y) to relative error 1e-12, 1e3 samples
    per n, n = 1..10."""
    rng = np.random.default_rng(2024)
    worst = 0.0
    for n in range(1, 11):
        count = 0
        while count < 1000:
            x = rng.uniform(-0.45, 0.45)
            k = int(rng.integers(n, n + 9))
            y = rng.uniform(math.ldexp(1.0, -(k + 1)), math.ldexp(1.0, -k))
            p1 = construction.p2_psi_with_grad(spec, x, y)[0]
            p2 = construction.p2_psi_with_grad(
                spec, math.ldexp(x, n), math.ldexp(y, n))[0]
            rel = abs(p1 - math.ldexp(p2, -n)) / abs(p1)
            worst = max(worst, rel)
            assert rel <= 1e-12, f"n = {n}, (x, y) = ({x}, {y}): rel {rel}"
            count += 1
    report(4, f"dyadic scaling law holds, max rel err {worst:.1e} "
              "(exact in binary floating point)")


def test_criterion_5_flatness_decay(spec):
    """max_x |grad g(x, 2^-j)| decreases monotonically below 1e-30
    (underflow accepted) for j = 4..40."""
    xs = np.linspace(-0.45, 0.45, 41)
    maxima = []
    for j in range(4, 41):
        y = math.ldexp(1.0, -j)
        maxima.append(max(math.hypot(*construction.g_grad(spec, (x, y)))
                          for x in xs))
    assert all(a >= b for a, b in zip(maxima, maxima[1:])), maxima
    assert maxima[-1] < 1e-30, maxima[-1]
    below = 4 + next(i for i, v in enumerate(maxima) if v < 1e-30)
    report(5, f"gradient maxima decay monotonically, below 1e-30 from j = {below}")


def test_criterion_6_analytic_contrast(catalog):
    """For the shear and the generating-function twist, every eps in a
    50-point grid over (0, 0.1] yields no fixed points and a positively
    certified displacement minimum.  Grid evidence, not proof."""
    eps_grid = [0.002 * i for i in range(1, 51)]
    region = Rect(0.0, 1.0, 0.0, 1.0)
    window = Rect(0.0, 1.0, 1e-4, 1.0)
    for name in ("shear", "twist"):
        lift = catalog[name]
        for eps in eps_grid:
            f_eps = translate_eps(lift, eps)
            records = find_fixed_points(f_eps, window, 0.01, tol=1e-12,
                                        epsilon=eps)
            assert records == [], f"{name} at eps = {eps}: {records[:3]}"
            cert = min_displacement(f_eps, region, 0.0025, epsilon=eps)
            assert cert.min_displacement > 0.0
            assert cert.margin > 0.0, (
                f"{name} at eps = {eps}: margin {cert.margin}")
    report(6, "shear and twist: empty detectors and positive certified "
              "margins on all 50 translations (evidence, not proof)")


def test_criterion_7_poincare_birkhoff_sanity(catalog):
    """Shear at eps = -0.01: interior fixed points at y ~ 0.01 within 1e-4.
    A loop around an isolated fixed point of the twist at the same eps has
    nonzero index; the shear's own zero set is a full horizontal line, on
    which every surrounding loop hits a zero displacement."""
    eps = -0.01
    shear_eps = translate_eps(catalog["shear"], eps)
    records = find_fixed_points(shear_eps, Rect(0.0, 1.0, 1e-4, 0.05), 0.002,
                                tol=1e-12, epsilon=eps)
    assert records
    for r in records:
        assert abs(r.location[1] - 0.01) < 1e-4, r
    with pytest.raises(DisplacementVanishesOnLoop):
        fixed_point_index(shear_eps, circle_polyline((0.5, 0.01), 0.005))

    twist_eps = translate_eps(catalog["twist"], eps)
    recs = find_fixed_points(twist_eps, Rect(0.0, 1.0, 1e-3, 0.05), 0.004,
                             tol=1e-12, epsilon=eps)
    assert len(recs) == 2
    indices = [fixed_point_index(twist_eps, circle_polyline(r.location, 0.004))
               for r in recs]
    assert all(ix != 0 for ix in indices), indices
    assert sorted(indices) == [-1, 1]
    report(7, f"shear fixed line found at y = 0.01 (+-1e-4); twist indices "
              f"{sorted(indices)}; shear loop correctly rejected (zero on loop)")


def test_criterion_8_brouwer_primitives(catalog):
    """Translation fixture: vertical-ray half line, verified; horizontal
    line rejected; compactified shear terminates via the twist rule and
    verifies at two resolutions; the periodic fixture yields its period."""
    from twistlab.cli import hedgehog_map

    trans = brouwer.PlaneMap(
        forward=lambda p: (p[0] + 1.0, p[1]),
        inverse=lambda q: (q[0] - 1.0, q[1]),
        periodic=True, twist_y0=0.0, name="translation")
    B = np.array([0.0, 0.0])
    AB = Polyline(np.array([[-1.0, 0.0], B]))
    BC = Polyline(np.array([B, [1.0, 0.0]]))
    res = construct_half_line(trans, AB, BC, B)
    assert res.status == "terminated-remark21"
    assert res.line.end_ray == (0.0, 1.0)
    full = Polyline(res.line.vertices, start_ray=(0.0, -1.0),
                    end_ray=res.line.end_ray)
    assert verify_brouwer_line(trans, full, (-4, 4, -4, 6), 1e-2).ok

    horizontal = Polyline(np.array([[-1.0, 0.0], [1.0, 0.0]]),
                          start_ray=(-1.0, 0.0), end_ray=(1.0, 0.0))
    assert not verify_brouwer_line(trans, horizontal, (-4, 4, -4, 6), 1e-2).ok

    h = compactify(catalog["shear"])
    B2 = np.array([0.3, 0.5])
    s = brouwer.plane_to_strip(0.0, 0.5)[1]
    AB2 = Polyline(np.array([[B2[0] - s, 0.5], B2]))
    BC2 = Polyline(np.array([B2, [B2[0] + s, 0.5]]))
    res2 = construct_half_line(h, AB2, BC2, B2)
    assert res2.status == "terminated-remark21"
    full2 = Polyline(res2.line.vertices, start_ray=(0.0, -1.0),
                     end_ray=res2.line.end_ray)
    seps = []
    for resolution in (1e-2, 5e-3):
        rep = verify_brouwer_line(h, full2, (-4, 5, -6, 8), resolution)
        assert rep.ok, rep
        seps.append(rep.separation)

    hh = hedgehog_map()
    A3 = np.array([0.5, -1.2])
    B3 = hh.fwd(A3)
    AB3 = Polyline(np.array([A3, B3]))
    BC3 = brouwer.sample_image(hh.fwd, AB3, 0.01)
    res3 = construct_half_line(hh, AB3, BC3, B3,
                               brouwer.ConstructionParams(max_legs=8))
    per = brouwer.detect_eventual_periodicity(res3.line, res3.events)
    assert per is not None and abs(per[0]) == 1 and per[1] is not None
    report(8, "translation ray verified; horizontal line rejected; "
              "compactified shear terminated by the twist rule and verified "
              f"at two resolutions (separations {seps[0]:.3f}); periodic "
              f"fixture yields |N| = {abs(per[0])}")


def test_criterion_9_property_suite_and_mutation(spec):
    """Every module invariant suite passes, and the mutation check (a
    sign-flipped gradient) is caught by the gradient-consistency check."""
    results = verify.run_all(spec, seed=0)
    failures = [(n, d) for n, ok, d in results if not ok]
    assert not failures, failures
    names = {n for n, _, _ in results}
    assert "mutation.gradient_flip_detected" in names

    g = construction.counterexample_field(spec)
    broken = genfun.ScalarField2(
        eval_at=g.eval_at,
        grad_at=lambda x, y: tuple(-v for v in g.grad_at(x, y)),
        domain_hint=g.domain_hint,
    )
    pts = [(0.2, 0.3), (0.1, 0.5), (-0.3, 0.7)]
    ok, _ = verify.gradient_consistency(broken, pts)
    assert not ok
    report(9, f"all {len(results)} invariant checks pass; sign-flipped "
              "gradient fails the suite as required")
