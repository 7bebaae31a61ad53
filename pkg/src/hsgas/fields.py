"""Test functions, empirical fields, and covariance estimation.

A :class:`TestFunction` is an observable h(x, v) on the one-particle phase
space, evaluated in batches.  Averages against the reference measure
(uniform in x, unit Maxwellian in v) use a fixed tensor quadrature:
Gauss-Hermite nodes per velocity dimension and a uniform midpoint grid per
spatial dimension actually used by the function, with a doubled-resolution
convergence check.

The empirical field of a configuration is pi(h) = mu^-1 sum_i h(z_i); the
fluctuation field is zeta(h) = sqrt(mu) pi(h) for mean-free h, where the
centering E pi(h) = 0 is exact rather than estimated.  Covariances of
fluctuation fields at two times are averaged over replica trajectories.
"""

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .dynamics import replay_at


class QuadratureError(RuntimeError):
    """Two quadrature refinements disagreed beyond tolerance."""


@dataclass(frozen=True)
class TestFunction:
    """Observable on phase space with quadrature metadata.

    ``fn`` maps batched arrays (n, d), (n, d) -> (n,).  ``x_dims`` lists the
    spatial coordinates the function actually depends on, which keeps the
    tensor quadrature grid tractable.  ``kernel_code`` is set for the
    closed-form catalog entries that the compiled kernels can evaluate
    inline; -1 otherwise.
    """

    fn: callable
    d: int
    cached_mean: float = None
    mean_free: bool = False
    x_dims: tuple = ()
    name: str = ""
    kernel_code: int = -1

    def __call__(self, x, v):
        return np.asarray(self.fn(x, v), dtype=float)


def evaluate(h, x, v):
    """Evaluate h on (n, d) position/velocity arrays, returning (n,)."""
    x = np.atleast_2d(np.asarray(x, float))
    v = np.atleast_2d(np.asarray(v, float))
    out = h(x, v)
    return np.atleast_1d(out)


def scaled(h, lam):
    """The observable lam * h, preserving metadata."""
    lam = float(lam)
    base = h.fn
    return replace(
        h,
        fn=lambda x, v: lam * np.asarray(base(x, v)),
        cached_mean=None if h.cached_mean is None else lam * h.cached_mean,
        name=f"{lam}*{h.name}" if h.name else "",
        kernel_code=-1,
    )


def catalog(d):
    """Named closed-form observables used across the test battery.

    All entries except "one" have zero Maxwellian average (odd moments,
    centered energy, or a vanishing spatial integral), exactly.
    """

    def sonine(x, v):
        return v[:, 0] * ((v * v).sum(axis=1) - (d + 2.0))

    entries = [
        TestFunction(lambda x, v: np.ones(len(v)), d, 1.0, False, (), "one", 0),
        TestFunction(lambda x, v: v[:, 0].copy(), d, 0.0, True, (), "v1", 1),
        TestFunction(lambda x, v: v[:, 0] * v[:, 1], d, 0.0, True, (), "v1v2", 2),
        TestFunction(sonine, d, 0.0, True, (), "sonine_v1", 3),
        TestFunction(
            lambda x, v: np.cos(2.0 * math.pi * x[:, 0]) * v[:, 0],
            d,
            0.0,
            True,
            (0,),
            "cos_x1_v1",
            4,
        ),
        TestFunction(
            lambda x, v: (v * v).sum(axis=1) - d, d, 0.0, True, (), "energy_centered", 5
        ),
    ]
    return {h.name: h for h in entries}


@lru_cache(maxsize=16)
def _gh_tensor(n, d):
    """Tensor Gauss-Hermite rule for the unit Maxwellian: nodes (n^d, d),
    weights summing to 1."""
    xi, wi = np.polynomial.hermite_e.hermegauss(n)
    wi = wi / wi.sum()
    grids = np.meshgrid(*[xi] * d, indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    ws = np.meshgrid(*[wi] * d, indexing="ij")
    weights = np.ones(len(nodes))
    for g in ws:
        weights *= g.ravel()
    return nodes, weights


def _quadrature_mean(h, n_v, n_x, chunk=1_000_000):
    d = h.d
    vnodes, vw = _gh_tensor(n_v, d)
    k = len(h.x_dims)
    if k == 0:
        x = np.full((len(vnodes), d), 0.5)
        return float(np.dot(vw, evaluate(h, x, vnodes)))
    axes = [(np.arange(n_x) + 0.5) / n_x] * k
    grids = np.meshgrid(*axes, indexing="ij")
    svals = np.stack([g.ravel() for g in grids], axis=1)
    n_s = len(svals)
    nv = len(vnodes)
    block = max(1, chunk // nv)
    total = 0.0
    for lo in range(0, n_s, block):
        sb = svals[lo : lo + block]
        b = len(sb)
        x = np.full((b * nv, d), 0.5)
        for c, dim in enumerate(h.x_dims):
            x[:, dim] = np.repeat(sb[:, c], nv)
        v = np.tile(vnodes, (b, 1))
        w = np.tile(vw, b)
        total += float(np.dot(w, evaluate(h, x, v)))
    return total / n_s


def maxwellian_integral(h, d=None, n_v=20, n_x=64):
    """Average of h against uniform-x times Maxwellian-v.

    Uses the cached value when the function carries one; otherwise the
    fixed tensor quadrature.
    """
    if d is not None and d != h.d:
        raise ValueError(f"observable is for d={h.d}, asked for d={d}")
    if h.cached_mean is not None:
        return h.cached_mean
    return _quadrature_mean(h, n_v, n_x)


def maxwellian_inner(g, h, n_v=20, n_x=64):
    """Inner product <g, h> in the Maxwellian-weighted L2 space."""
    if g.d != h.d:
        raise ValueError("dimension mismatch")
    prod = TestFunction(
        fn=lambda x, v: np.asarray(g.fn(x, v)) * np.asarray(h.fn(x, v)),
        d=g.d,
        x_dims=tuple(sorted(set(g.x_dims) | set(h.x_dims))),
    )
    return _quadrature_mean(prod, n_v, n_x)


def l2m_norm(h, **kw):
    return math.sqrt(max(maxwellian_inner(h, h, **kw), 0.0))


def mean_free_project(h):
    """Center h to zero Maxwellian average: returns h - <h>.

    The average is computed at the base quadrature resolution and verified
    against a doubled grid; disagreement beyond 1e-8 raises
    :class:`QuadratureError` (the function is not smooth enough for the
    fixed rule).
    """
    if h.mean_free:
        return h
    m1 = _quadrature_mean(h, 20, 64)
    m2 = _quadrature_mean(h, 40, 128)
    if abs(m1 - m2) > 1e-8:
        raise QuadratureError(
            f"quadrature means disagree: {m1!r} vs {m2!r} under refinement"
        )
    base = h.fn
    mean = m2
    return replace(
        h,
        fn=lambda x, v: np.asarray(base(x, v)) - mean,
        cached_mean=0.0,
        mean_free=True,
        name=f"{h.name}_centered" if h.name else "",
        kernel_code=-1,
    )


def empirical_field(config, h, mu_eps):
    """pi(h) = mu^-1 sum_i h(z_i), an exact finite sum."""
    if config.n == 0:
        return 0.0
    return float(evaluate(h, config.x, config.v).sum()) / mu_eps


def fluctuation_field(config, h, mu_eps):
    """zeta(h) = sqrt(mu) pi(h) for mean-free h.

    Refuses observables without the mean-free flag: for those the centering
    would need an estimate of E pi(h), which carries an O(eps) bias, while
    for mean-free h the centering is exactly zero.
    """
    if not h.mean_free:
        raise ValueError("fluctuation field requires a mean-free observable; "
                         "apply mean_free_project first")
    return math.sqrt(mu_eps) * empirical_field(config, h, mu_eps)


@dataclass(frozen=True)
class CovarianceEstimate:
    value: float
    stderr: float
    replicas: int
    t: float
    seed_root: int = 0

    def __post_init__(self):
        if self.stderr < 0 or self.replicas < 2:
            raise ValueError("stderr must be >= 0 and replicas >= 2")


def _default_mu(log, mu_eps):
    if mu_eps is not None:
        return float(mu_eps)
    eps = log.initial.eps
    if eps <= 0.0:
        raise ValueError("mu_eps must be given explicitly when eps = 0")
    return eps ** (-(log.initial.d - 1))


def covariance(replica_logs, t, g0, h, mu_eps=None, time_origins=1, seed_root=0):
    """Replica average of zeta_s(g0) * zeta_{s+t}(h).

    Each log contributes the mean over ``time_origins`` evenly spaced
    origins s (stationarity makes the origins exchangeable); the standard
    error comes from the replica-level variance only, since origins within
    one trajectory are correlated.  ``mu_eps`` defaults to the locked
    scaling eps^-(d-1) of the logs' diameter.
    """
    logs = list(replica_logs)
    if len(logs) < 2:
        raise ValueError("need at least 2 replicas for a covariance estimate")
    if not (g0.mean_free and h.mean_free):
        raise ValueError("both observables must be mean-free")
    vals = np.empty(len(logs))
    for r, log in enumerate(logs):
        mu = _default_mu(log, mu_eps)
        span = log.t1 - log.t0
        if span + 1e-12 < t:
            raise ValueError(f"log spans {span}, shorter than t={t}")
        if time_origins == 1:
            origins = [log.t0]
        else:
            origins = np.linspace(log.t0, log.t1 - t, time_origins)
        acc = 0.0
        for s in origins:
            st0 = replay_at(log, float(s))
            st1 = st0 if t == 0.0 else replay_at(log, float(s) + t)
            acc += fluctuation_field(st0, g0, mu) * fluctuation_field(st1, h, mu)
        vals[r] = acc / len(origins)
    value = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(len(vals)))
    return CovarianceEstimate(value, stderr, len(logs), float(t), int(seed_root))


def moment_probe(states, h, p, mu_eps=None):
    """Monte Carlo estimate of E(zeta_0(h)^p) over equilibrium draws.

    Supports the bound checks on the field's second and fourth moments.
    """
    if p not in (2, 4):
        raise ValueError("p must be 2 or 4")
    states = list(states)
    acc = 0.0
    for st in states:
        if mu_eps is not None:
            mu = float(mu_eps)
        elif st.eps > 0.0:
            mu = st.eps ** (-(st.d - 1))
        else:
            raise ValueError("mu_eps must be given explicitly when eps = 0")
        acc += fluctuation_field(st, h, mu) ** p
    return acc / len(states)
