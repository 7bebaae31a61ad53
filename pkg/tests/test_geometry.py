"""Torus geometry and pair-collision prediction."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsgas import geometry


def brute_contact(x1, v1, x2, v2, eps, horizon, kmax=None):
    """Oracle: scan every lattice image with its own quadratic.

    Independent of the production chunk-walk: enumerates all shifts in a
    box large enough to cover the swept segment and takes the smallest
    admissible root.
    """
    x1, v1, x2, v2 = (np.asarray(a, float) for a in (x1, v1, x2, v2))
    r0 = geometry.minimal_image(x2 - x1)
    w = v2 - v1
    speed = np.linalg.norm(w)
    if kmax is None:
        kmax = int(math.ceil(speed * horizon)) + 2
    d = len(r0)
    grids = np.meshgrid(*[np.arange(-kmax, kmax + 1)] * d, indexing="ij")
    shifts = np.stack([g.ravel() for g in grids], axis=1)
    rr = r0[None, :] - shifts
    a = float(w @ w)
    if a == 0.0:
        return np.inf
    b = rr @ w
    c = np.einsum("ij,ij->i", rr, rr) - eps * eps
    disc = b * b - a * c
    ok = disc > 1e-14
    t = np.full(len(shifts), np.inf)
    t[ok] = (-b[ok] - np.sqrt(disc[ok])) / a
    t[(t < 0) | (t > horizon)] = np.inf
    return float(t.min())


def test_wrap_range():
    x = np.array([[1.25, -0.25, 3.0], [0.0, 0.999, -1e-9]])
    w = geometry.wrap(x)
    assert np.all(w >= 0.0) and np.all(w < 1.0)
    assert np.allclose(w[0], [0.25, 0.75, 0.0])


def test_minimal_image_tie_goes_negative():
    assert geometry.minimal_image(np.array([0.5]))[0] == -0.5
    assert geometry.minimal_image(np.array([-0.5]))[0] == -0.5
    assert geometry.minimal_image(np.array([0.49999]))[0] == pytest.approx(0.49999)


def test_torus_distance_wraps():
    assert geometry.torus_distance([0.05, 0.5], [0.95, 0.5]) == pytest.approx(0.1)
    assert geometry.torus_distance([0.0, 0.0], [0.5, 0.5]) == pytest.approx(math.sqrt(0.5))


def test_head_on_contact():
    t, omega = geometry.sphere_collision_time(
        [0.4, 0.5, 0.5], [1.0, 0.0, 0.0], [0.6, 0.5, 0.5], [-1.0, 0.0, 0.0], 0.1, 1.0
    )
    assert t == pytest.approx(0.05, abs=1e-12)
    assert np.allclose(omega, [-1.0, 0.0, 0.0])


def test_contact_across_boundary():
    # the short way round passes through the x = 0 face
    t, omega = geometry.sphere_collision_time(
        [0.1, 0.5], [-1.0, 0.0], [0.9, 0.5], [0.0, 0.0], 0.1, 1.0
    )
    assert t == pytest.approx(0.1, abs=1e-12)
    assert np.allclose(omega, [1.0, 0.0])


def test_second_image_contact():
    # the pair separates along the direct image but collides one period on
    t, omega = geometry.sphere_collision_time(
        [0.3, 0.5], [2.0, 0.0], [0.5, 0.5], [0.0, 0.0], 0.05, 1.0
    )
    # direct gap 0.2 - eps, then the wrap adds a full period
    assert t == pytest.approx((0.2 - 0.05) / 2.0, abs=1e-12)
    t2, _ = geometry.sphere_collision_time(
        [0.3, 0.5], [-2.0, 0.0], [0.5, 0.5], [0.0, 0.0], 0.05, 1.0
    )
    assert t2 == pytest.approx((0.8 - 0.05) / 2.0, abs=1e-12)


def test_overlapping_pair_reports_no_contact():
    # inside the exclusion ball there is no outside-in crossing until the
    # relative motion has left and re-approached, which takes t > 0.5 here
    t, omega = geometry.sphere_collision_time(
        [0.50, 0.5], [1.0, 0.0], [0.55, 0.5], [0.0, 0.0], 0.1, 0.5
    )
    assert t == np.inf and omega is None


def test_grazing_pass_is_skipped():
    # impact parameter exactly eps: tangency, not a collision
    t, _ = geometry.sphere_collision_time(
        [0.2, 0.5], [1.0, 0.0], [0.5, 0.6], [0.0, 0.0], 0.1, 1.0
    )
    assert t == np.inf


def test_contact_matches_brute_force():
    rng = np.random.default_rng(1234)
    checked = 0
    for _ in range(300):
        d = int(rng.integers(2, 4))
        x1, x2 = rng.random(d), rng.random(d)
        v1, v2 = rng.normal(size=d), rng.normal(size=d)
        eps = float(rng.uniform(0.02, 0.2))
        if geometry.torus_distance(x1, x2) <= eps:
            continue
        t_ref = brute_contact(x1, v1, x2, v2, eps, 1.5)
        t, omega = geometry.sphere_collision_time(x1, v1, x2, v2, eps, 1.5)
        if math.isinf(t_ref):
            assert math.isinf(t)
        else:
            assert t == pytest.approx(t_ref, abs=1e-10)
            assert np.linalg.norm(omega) == pytest.approx(1.0, abs=1e-12)
            checked += 1
    assert checked > 50


def test_contact_by_dense_stepping():
    # dense positional scan confirms the first eps-crossing time
    x1, v1 = np.array([0.15, 0.40]), np.array([0.7, -0.1])
    x2, v2 = np.array([0.85, 0.42]), np.array([-0.9, 0.0])
    eps = 0.08
    t, _ = geometry.sphere_collision_time(x1, v1, x2, v2, eps, 2.0)
    assert math.isfinite(t)
    ts = np.arange(0.0, t + 5e-4, 1e-6)
    rel = (x2 - x1)[None, :] + ts[:, None] * (v2 - v1)[None, :]
    rel -= np.floor(rel + 0.5)
    gaps = np.linalg.norm(rel, axis=1)
    first = int(np.argmax(gaps <= eps))
    assert gaps[first] <= eps
    assert abs(ts[first] - t) < 2e-6


unit_vec = st.integers(0, 10_000).map(
    lambda k: np.array(
        [
            math.sin(k * 0.017) * math.cos(k * 0.031),
            math.sin(k * 0.017) * math.sin(k * 0.031),
            math.cos(k * 0.017),
        ]
    )
)
vel = st.lists(
    st.floats(-3, 3, allow_nan=False, allow_infinity=False), min_size=3, max_size=3
).map(np.array)


@given(unit_vec, vel, vel)
@settings(max_examples=200, deadline=None)
def test_reflect_is_involutive_and_conservative(omega, v1, v2):
    w1, w2 = geometry.specular_reflect(v1, v2, omega)
    b1, b2 = geometry.specular_reflect(w1, w2, omega)
    assert np.allclose(b1, v1, atol=1e-12) and np.allclose(b2, v2, atol=1e-12)
    # conservation to roundoff: the same projection moves across the pair
    assert np.allclose(w1 + w2, v1 + v2, atol=1e-12)
    assert np.dot(w1, w1) + np.dot(w2, w2) == pytest.approx(
        np.dot(v1, v1) + np.dot(v2, v2), rel=1e-12
    )


def test_reflect_rejects_bad_normal():
    with pytest.raises(ValueError):
        geometry.specular_reflect([1.0, 0, 0], [0, 0, 0], [0.5, 0.5, 0.5])


@given(
    st.lists(st.floats(-40, 40, allow_nan=False), min_size=2, max_size=2).map(np.array)
)
@settings(max_examples=200, deadline=None)
def test_minimal_image_lands_in_half_open_cell(dx):
    r = geometry.minimal_image(dx)
    assert np.all(r >= -0.5) and np.all(r < 0.5)
    assert np.allclose((dx - r) - np.round(dx - r), 0.0, atol=1e-9)


def test_collision_time_symmetric_under_swap():
    rng = np.random.default_rng(7)
    for _ in range(50):
        x1, x2 = rng.random(3), rng.random(3)
        v1, v2 = rng.normal(size=3), rng.normal(size=3)
        if geometry.torus_distance(x1, x2) <= 0.1:
            continue
        ta, oa = geometry.sphere_collision_time(x1, v1, x2, v2, 0.1, 1.0)
        tb, ob = geometry.sphere_collision_time(x2, v2, x1, v1, 0.1, 1.0)
        assert ta == pytest.approx(tb, abs=1e-12) if math.isfinite(ta) else math.isinf(tb)
        if oa is not None:
            assert np.allclose(oa, -ob, atol=1e-9)


def test_collision_time_translation_invariant():
    x1, v1 = np.array([0.2, 0.5, 0.5]), np.array([1.0, 0.1, 0.0])
    x2, v2 = np.array([0.7, 0.5, 0.5]), np.array([-1.0, 0.1, 0.0])
    t0, o0 = geometry.sphere_collision_time(x1, v1, x2, v2, 0.12, 2.0)
    assert np.isfinite(t0)
    shift = np.array([0.37, -0.58, 0.91])
    boost = np.array([1.3, 0.2, -0.7])
    t1, o1 = geometry.sphere_collision_time(
        geometry.wrap(x1 + shift), v1 + boost, geometry.wrap(x2 + shift), v2 + boost, 0.12, 2.0
    )
    assert t1 == pytest.approx(t0, abs=1e-9)
    assert np.allclose(o0, o1, atol=1e-9)
