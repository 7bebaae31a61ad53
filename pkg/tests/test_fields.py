"""Observables, projections, fluctuation fields, covariance estimator."""

import math

import numpy as np
import pytest

from hsgas import _kernels, dynamics, fields, sampling
from hsgas.dynamics import GasState
from hsgas.fields import TestFunction


@pytest.fixture(scope="module")
def cat3():
    return fields.catalog(3)


def random_batch(rng, n, d):
    return rng.random((n, d)), rng.normal(size=(n, d))


def test_catalog_means_vanish_by_quadrature(cat3):
    for name, h in cat3.items():
        m = fields._quadrature_mean(h, 20, 64)
        expect = 1.0 if name == "one" else 0.0
        assert abs(m - expect) <= 1e-10, name


def test_kernel_catalog_matches_python(cat3):
    rng = np.random.default_rng(0)
    x, v = random_batch(rng, 200, 3)
    for h in cat3.values():
        want = fields.evaluate(h, x, v)
        got = np.array(
            [_kernels.eval_catalog(h.kernel_code, x[i], v[i], 3) for i in range(200)]
        )
        assert np.allclose(got, want, atol=1e-13), h.name


def test_project_leaves_odd_function_alone(cat3):
    h = TestFunction(lambda x, v: v[:, 0].copy(), 3)
    hp = fields.mean_free_project(h)
    assert hp.mean_free
    rng = np.random.default_rng(1)
    x, v = random_batch(rng, 100, 3)
    assert np.allclose(fields.evaluate(hp, x, v), fields.evaluate(h, x, v), atol=1e-12)


def test_project_centers_energy(cat3):
    h = TestFunction(lambda x, v: (v * v).sum(axis=1), 3)
    hp = fields.mean_free_project(h)
    rng = np.random.default_rng(2)
    x, v = random_batch(rng, 100, 3)
    want = fields.evaluate(cat3["energy_centered"], x, v)
    assert np.allclose(fields.evaluate(hp, x, v), want, atol=1e-9)


def test_project_respects_vanishing_spatial_integral():
    h = TestFunction(
        lambda x, v: np.cos(2 * math.pi * x[:, 0]) * v[:, 0] ** 2, 3, x_dims=(0,)
    )
    hp = fields.mean_free_project(h)
    rng = np.random.default_rng(3)
    x, v = random_batch(rng, 100, 3)
    assert np.allclose(fields.evaluate(hp, x, v), fields.evaluate(h, x, v), atol=1e-9)


def test_project_flags_rough_function():
    h = TestFunction(lambda x, v: np.abs(v[:, 0]), 3)
    with pytest.raises(fields.QuadratureError):
        fields.mean_free_project(h)


def test_project_is_idempotent(cat3):
    h = cat3["v1"]
    assert fields.mean_free_project(h) is h


def test_empirical_field_basics(cat3):
    h = cat3["v1"]
    empty = GasState(np.empty((0, 3)), np.empty((0, 3)), 0.1)
    assert fields.empirical_field(empty, h, 10.0) == 0.0
    one = GasState(np.array([[0.2, 0.3, 0.4]]), np.array([[1.5, 0.0, 0.0]]), 0.1)
    assert fields.empirical_field(one, h, 10.0) == pytest.approx(0.15)


def test_empirical_field_linearity(cat3):
    rng = np.random.default_rng(4)
    x, v = random_batch(rng, 30, 3)
    st = GasState(x, v, 0.01)
    g, h = cat3["v1"], cat3["energy_centered"]
    combo = TestFunction(
        lambda x_, v_: 2.0 * g.fn(x_, v_) - 0.5 * h.fn(x_, v_), 3, mean_free=True
    )
    lhs = fields.empirical_field(st, combo, 7.0)
    rhs = 2.0 * fields.empirical_field(st, g, 7.0) - 0.5 * fields.empirical_field(
        st, h, 7.0
    )
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_fluctuation_field_requires_mean_free(cat3):
    st = GasState(np.array([[0.5, 0.5, 0.5]]), np.array([[1.0, 0.0, 0.0]]), 0.1)
    with pytest.raises(ValueError):
        fields.fluctuation_field(st, cat3["one"], 10.0)
    zero = fields.scaled(cat3["v1"], 0.0)
    assert fields.fluctuation_field(st, zero, 10.0) == 0.0


def test_field_variance_near_ideal(cat3_params=None):
    # nearly ideal gas: Var zeta_0(v_1) = E(N)/mu, close to 1 at tiny eps
    p = sampling.GrandCanonicalParams(2, 0.01, 20.0)
    h = fields.catalog(2)["v1"]
    vals = np.empty(10_000)
    for r in range(len(vals)):
        st = sampling.sample_equilibrium(p, 23, stream=r)
        vals[r] = fields.fluctuation_field(st, h, p.mu_eps)
    var = vals.var(ddof=1)
    se = var * math.sqrt(2.0 / (len(vals) - 1))
    assert abs(var - 1.0) < 3 * se + 0.01
    assert abs(vals.mean()) < 3 * vals.std(ddof=1) / math.sqrt(len(vals))


def test_field_mean_is_centered():
    p = sampling.GrandCanonicalParams(2, 0.05, 20.0)
    h = fields.catalog(2)["sonine_v1"]
    vals = np.array(
        [
            fields.fluctuation_field(
                sampling.sample_equilibrium(p, 29, stream=r), h, p.mu_eps
            )
            for r in range(2000)
        ]
    )
    assert abs(vals.mean()) < 3 * vals.std(ddof=1) / math.sqrt(len(vals))


@pytest.fixture(scope="module")
def replica_logs():
    p = sampling.GrandCanonicalParams.locked(2, 0.1)
    logs = []
    for r in range(64):
        st = sampling.sample_equilibrium(p, 41, stream=r)
        _, log = dynamics.evolve(st, 1.0)
        logs.append(log)
    return p, logs


def test_covariance_symmetry_at_zero(replica_logs):
    p, logs = replica_logs
    c2 = fields.catalog(2)
    a = fields.covariance(logs, 0.0, c2["v1"], c2["energy_centered"], p.mu_eps)
    b = fields.covariance(logs, 0.0, c2["energy_centered"], c2["v1"], p.mu_eps)
    assert a.value == b.value  # identical estimator expression


def test_covariance_is_a_variance_at_zero(replica_logs):
    p, logs = replica_logs
    h = fields.catalog(2)["v1"]
    est = fields.covariance(logs, 0.0, h, h, p.mu_eps)
    assert est.value >= -3 * est.stderr
    assert est.replicas == 64 and est.t == 0.0


def test_covariance_cross_component_vanishes(replica_logs):
    p, logs = replica_logs
    c2 = fields.catalog(2)
    est = fields.covariance(logs, 0.0, c2["v1"], c2["v1v2"], p.mu_eps)
    assert abs(est.value) <= 3 * est.stderr + 1e-3


def test_covariance_zero_function(replica_logs):
    p, logs = replica_logs
    h = fields.catalog(2)["v1"]
    est = fields.covariance(logs, 0.5, h, fields.scaled(h, 0.0), p.mu_eps)
    assert est.value == 0.0 and est.stderr == 0.0


def test_covariance_origin_shift_consistency(replica_logs):
    p, logs = replica_logs
    h = fields.catalog(2)["v1"]
    a = fields.covariance(logs, 0.4, h, h, p.mu_eps, time_origins=1)
    b = fields.covariance(logs, 0.4, h, h, p.mu_eps, time_origins=3)
    assert abs(a.value - b.value) <= 3 * (a.stderr + b.stderr)


def test_covariance_validation(replica_logs):
    p, logs = replica_logs
    h = fields.catalog(2)["v1"]
    with pytest.raises(ValueError):
        fields.covariance(logs[:1], 0.0, h, h, p.mu_eps)
    with pytest.raises(ValueError):
        fields.covariance(logs, 5.0, h, h, p.mu_eps)
    with pytest.raises(ValueError):
        fields.covariance(logs, 0.0, fields.catalog(2)["one"], h, p.mu_eps)
    with pytest.raises(ValueError):
        fields.CovarianceEstimate(1.0, -0.1, 4, 0.0)
    with pytest.raises(ValueError):
        fields.CovarianceEstimate(1.0, 0.1, 1, 0.0)


def test_moment_probe_bounds_and_scaling():
    p = sampling.GrandCanonicalParams(2, 0.05, 20.0)
    h = fields.catalog(2)["v1"]  # unit Maxwellian norm
    states = [sampling.sample_equilibrium(p, 59, stream=r) for r in range(2000)]
    m2 = fields.moment_probe(states, h, 2, p.mu_eps)
    assert 0.0 < m2 <= 4.0
    lam = 1.7
    m2s = fields.moment_probe(states, fields.scaled(h, lam), 2, p.mu_eps)
    assert m2s == pytest.approx(lam * lam * m2, rel=1e-12)
    m4 = fields.moment_probe(states, h, 4, p.mu_eps)
    assert m4 >= m2 * m2 - 1e-9  # Jensen
    with pytest.raises(ValueError):
        fields.moment_probe(states, h, 3, p.mu_eps)


def test_maxwellian_integral_and_norm():
    c2 = fields.catalog(2)
    assert fields.maxwellian_integral(c2["one"]) == 1.0
    with pytest.raises(ValueError):
        fields.maxwellian_integral(c2["one"], d=3)
    # |v_1|^2 has unit Maxwellian norm per component
    assert fields.l2m_norm(c2["v1"]) == pytest.approx(1.0, abs=1e-10)
    # Sonine-type probe: <v_1^2 (|v|^2 - (d+2))^2> at d = 2
    got = fields.l2m_norm(c2["sonine_v1"])
    # independent oracle by Gaussian moments: E v1^2 (v1^2+v2^2-4)^2
    rng = np.random.default_rng(6)
    v = rng.normal(size=(4_000_000, 2))
    mc = math.sqrt((v[:, 0] ** 2 * ((v**2).sum(1) - 4.0) ** 2).mean())
    assert got == pytest.approx(mc, rel=2e-2)