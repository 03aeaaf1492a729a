"""Fixed-point detection, translations, displacement certificates, index."""

import math

import numpy as np
import pytest

from twistlab import construction, dynamics
from twistlab.dynamics import (
    DisplacementVanishesOnLoop,
    LiftMap,
    find_fixed_points,
    fixed_point_index,
    min_displacement,
    translate_eps,
)
from twistlab.genfun import Rect
from twistlab.geom import Polyline, circle_polyline


def test_translate_zero_is_same_map(catalog):
    shear = catalog["shear"]
    assert translate_eps(shear, 0.0) is shear


def test_translate_identity_lift(catalog):
    f = translate_eps(catalog["identity"], 0.25)
    assert f.forward((0.3, 0.4)) == (0.55, 0.4)
    recs = find_fixed_points(f, Rect(0, 1, 0, 1), 0.05)
    assert recs == []


def test_translate_inverse_consistency(catalog):
    f = translate_eps(catalog["twist"], 0.07)
    p = (0.3, 0.6)
    q = f.forward(p)
    b = f.inverse(q)
    assert math.hypot(b[0] - p[0], b[1] - p[1]) < 1e-10


def test_shear_positive_eps_empty(catalog):
    f = translate_eps(catalog["shear"], 0.01)
    recs = find_fixed_points(f, Rect(0.0, 1.0, 1e-4, 1.0), 0.02)
    assert recs == []
    cert = min_displacement(f, Rect(0.0, 1.0, 0.0, 1.0), 0.002)
    assert cert.min_displacement >= 0.01 - 1e-12
    assert cert.margin > 0.0


def test_shear_negative_eps_finds_line(catalog):
    f = translate_eps(catalog["shear"], -0.01)
    recs = find_fixed_points(f, Rect(0.0, 1.0, 1e-4, 0.05), 0.002)
    assert recs
    for r in recs:
        assert abs(r.location[1] - 0.01) < 1e-4
        assert r.residual <= 1e-12


def test_identity_displacement_is_eps(catalog):
    f = translate_eps(catalog["identity"], 0.03)
    cert = min_displacement(f, Rect(0, 1, 0, 1), 0.05)
    assert abs(cert.min_displacement - 0.03) < 1e-15
    assert cert.modulus_bound < 1e-12


def test_counterexample_predicted_points_found(spec, annulus_map):
    # cross-module oracle: the construction's predicted translation sizes
    for k in range(spec.k0, spec.k0 + 5):
        eps, point = construction.predicted_fixed_data(spec, k)
        f_eps = translate_eps(annulus_map, eps)
        half = construction.inner_radius(k) * 2.0 ** spec.k0 / 2.0
        w = Rect(point[0] - half, point[0] + half,
                 point[1] - half, point[1] + half)
        recs = find_fixed_points(f_eps, w, w.width / 41.0, tol=1e-12, epsilon=eps)
        hit = [r for r in recs
               if max(abs(r.location[0] - point[0]),
                      abs(r.location[1] - point[1])) < 1e-10]
        assert hit, f"k = {k}"
        assert hit[0].residual < 1e-10


def test_records_satisfy_residual_bound(spec, annulus_map):
    eps, point = construction.predicted_fixed_data(spec, spec.k0)
    f_eps = translate_eps(annulus_map, eps)
    w = Rect(point[0] - 0.03, point[0] + 0.03, point[1] - 0.03, point[1] + 0.03)
    recs = find_fixed_points(f_eps, w, w.width / 41.0, tol=1e-12, epsilon=eps)
    assert recs
    for r in recs:
        q = f_eps.forward(r.location)
        assert math.hypot(q[0] - r.location[0], q[1] - r.location[1]) <= 1e-12


def test_detector_equivariance(catalog):
    f = translate_eps(catalog["twist"], -0.01)
    w0 = Rect(0.1, 0.4, 0.001, 0.05)
    r0 = find_fixed_points(f, w0, 0.005)
    w1 = Rect(1.1, 1.4, 0.001, 0.05)
    r1 = find_fixed_points(f, w1, 0.005)
    assert len(r0) == len(r1) >= 1
    for a in r0:
        assert min(abs(a.location[0] + 1 - b.location[0])
                   + abs(a.location[1] - b.location[1]) for b in r1) < 1e-9


def test_twist_negative_eps_isolated_pair(catalog):
    # at eps = -0.01 the twist has a Poincare-Birkhoff pair near X = 1/4, 3/4
    f = translate_eps(catalog["twist"], -0.01)
    recs = find_fixed_points(f, Rect(0.0, 1.0, 1e-3, 0.05), 0.004)
    assert len(recs) == 2
    xs = sorted(r.location[0] for r in recs)
    assert abs(xs[0] - 0.24) < 5e-3
    assert abs(xs[1] - 0.74) < 5e-3
    for r in recs:
        assert abs(r.location[1] - 0.01) < 2e-3


def test_index_of_isolated_zeros(catalog):
    f = translate_eps(catalog["twist"], -0.01)
    recs = find_fixed_points(f, Rect(0.0, 1.0, 1e-3, 0.05), 0.004)
    indices = []
    for r in recs:
        loop = circle_polyline(r.location, 0.004, n=64)
        indices.append(fixed_point_index(f, loop))
    assert sorted(indices) == [-1, 1]


def test_index_synthetic_identity_field():
    # displacement field = p itself: winding 1 around the origin
    field = LiftMap(forward=lambda p: (2 * p[0], 2 * p[1]),
                    inverse=lambda q: (q[0] / 2, q[1] / 2), name="radial")
    loop = circle_polyline((0.0, 0.0), 0.5, n=64)
    assert fixed_point_index(field, loop) == 1


def test_index_zero_in_displacement_positive_region(catalog):
    f = translate_eps(catalog["shear"], 0.05)
    loop = circle_polyline((0.5, 0.5), 0.1, n=64)
    assert fixed_point_index(f, loop) == 0


def test_index_raises_when_displacement_vanishes(catalog):
    # the shear's zero set at eps < 0 is the full horizontal line y = -eps:
    # every surrounding loop crosses it, so the index is undefined
    f = translate_eps(catalog["shear"], -0.01)
    loop = circle_polyline((0.5, 0.01), 0.005, n=32)
    with pytest.raises(DisplacementVanishesOnLoop):
        fixed_point_index(f, loop)


def test_reference_maps_fix_bottom_and_twist(catalog):
    for name, m in catalog.items():
        for x in np.linspace(-1, 2, 40):
            q = m.forward((x, 0.0))
            assert abs(q[0] - x) < 1e-13 and abs(q[1]) < 1e-14
        if name == "identity":
            continue
        for x in np.linspace(-1, 2, 40):
            X, _ = m.forward((x, 1.0))
            assert X > x


def test_shear_top_shift(catalog):
    X, Y = catalog["shear"].forward((0.0, 1.0))
    assert X == 1.0 and Y == 1.0


def test_twist_is_area_preserving(catalog):
    from twistlab import genfun

    m = genfun.StripMap(forward=catalog["twist"].forward,
                        inverse=catalog["twist"].inverse,
                        valid_region=Rect(-2, 2, 0, 1))
    rng = np.random.default_rng(12)
    for _ in range(200):
        p = (rng.uniform(-1, 1), rng.uniform(0.01, 0.99))
        det = np.linalg.det(genfun.jacobian_fd(m, p, 1e-5))
        assert abs(det - 1.0) < 1e-6


def test_twist_batch_matches_pointwise(catalog):
    tw = catalog["twist"]
    rng = np.random.default_rng(13)
    pts = np.column_stack([rng.uniform(-1, 1, 50), rng.uniform(0, 1, 50)])
    batch = tw.batch_forward(pts)
    for p, q in zip(pts, batch):
        qq = tw.forward((p[0], p[1]))
        assert math.hypot(qq[0] - q[0], qq[1] - q[1]) < 1e-11


def test_min_displacement_modulus_certifies(catalog):
    f = translate_eps(catalog["twist"], 0.002)
    cert = min_displacement(f, Rect(0, 1, 0, 1), 0.002)
    assert cert.min_displacement >= 0.002 - 1e-12
    assert cert.margin > 0
    assert cert.modulus_bound < 5.0


def test_sweep_result_coverage():
    res = dynamics.SweepResult(epsilon_grid=[0.1, 0.2])
    res.records.append(dynamics.FixedPointRecord(0.1, (0, 0), 0.0))
    assert not res.covered()
    res.certificates.append(dynamics.EmptinessCertificate(0.2, 1.0, 0.01, 1.0))
    assert res.covered()
