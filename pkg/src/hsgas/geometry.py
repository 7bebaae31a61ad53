"""Geometry of the unit torus with hard-sphere exclusion.

Positions are points of [0, 1)^d with periodic identification; all pair
quantities (distances, contact normals, collision times) are computed
through minimal images, and collision prediction accounts for every
periodic image reachable within the requested horizon.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels


def wrap(x):
    """Canonical torus representative of positions, componentwise in [0, 1).

    Accepts a single point or an (n, d) array; returns a new array.
    """
    x = np.asarray(x, dtype=float)
    return x - np.floor(x)


def minimal_image(dx):
    """Displacement representative in [-1/2, 1/2)^d.

    Components at exactly half-integer offset map to -1/2 (the floor-based
    rule keeps the convention deterministic).
    """
    dx = np.asarray(dx, dtype=float)
    return dx - np.floor(dx + 0.5)


def torus_distance(x, y):
    """Geodesic distance between two torus points."""
    return float(np.linalg.norm(minimal_image(np.asarray(y, float) - np.asarray(x, float))))


@dataclass(frozen=True)
class ContactEvent:
    """A resolved pair collision: time, ordered indices, contact normal.

    ``omega`` points from particle j to particle i, the direction used by
    the reflection law.
    """

    time: float
    i: int
    j: int
    omega: np.ndarray


def sphere_collision_time(x1, v1, x2, v2, eps, horizon):
    """First time in [0, horizon] at which the pair reaches distance eps.

    Returns (t, omega) where omega is the contact normal pointing from
    particle 2 to particle 1, or (inf, None) when the pair stays apart.
    Already-overlapping or separating configurations never produce a
    contact; tangential passes within the grazing tolerance are skipped.
    """
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    v1 = np.asarray(v1, float)
    v2 = np.asarray(v2, float)
    d = x1.shape[0]
    if eps <= 0.0 or eps >= 0.5:
        raise ValueError("eps must lie in (0, 0.5) for single-image contacts")
    r0 = minimal_image(x2 - x1)
    w = v2 - v1
    shift = np.empty(d, dtype=np.int64)
    t, _ = _kernels.earliest_contact(r0, w, eps, float(horizon), shift)
    if t >= 1e299:
        return np.inf, None
    # contact separation of the realized image, normalized
    sep = r0 + w * t - shift
    omega = -sep / np.linalg.norm(sep)
    return float(t), omega


def specular_reflect(v1, v2, omega):
    """Elastic hard-sphere reflection of a velocity pair.

    ``omega`` must be a unit vector (checked to 1e-12); the exchange is its
    own inverse and conserves momentum and kinetic energy exactly, because
    the same projection is subtracted from one side and added to the other.
    """
    v1 = np.asarray(v1, float)
    v2 = np.asarray(v2, float)
    omega = np.asarray(omega, float)
    nrm = np.linalg.norm(omega)
    if abs(nrm - 1.0) > 1e-12:
        raise ValueError("contact normal must be a unit vector")
    c = float(np.dot(v1 - v2, omega))
    return v1 - c * omega, v2 + c * omega
