"""Shared independent oracles and scene fixtures for the test suite.

The SH oracle goes through scipy's complex spherical harmonics and folds
the Condon-Shortley phase back out, so it shares no code with the package.
"""

import numpy as np
from scipy.special import sph_harm_y

from sfskit.types import ColorMap, LightSH, Mask, VectorFieldMap


def sh_oracle(n):
    """Real second-order SH basis at unit vector n, float64."""
    x, y, z = n
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    phi = np.arctan2(y, x)
    s2 = np.sqrt(2.0)

    def Y(l, m):
        return sph_harm_y(l, m, theta, phi)

    return np.array(
        [
            Y(0, 0).real,
            Y(1, 0).real,
            -s2 * Y(1, 1).real,
            -s2 * Y(1, 1).imag,
            Y(2, 0).real,
            -s2 * Y(2, 1).real,
            -s2 * Y(2, 1).imag,
            s2 * Y(2, 2).real,
            s2 * Y(2, 2).imag,
        ]
    )


def unit_vectors(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sphere_scene(size=24, seed=0):
    """Spherical-cap normals over a circular mask with random albedo.

    Normals cover a wide solid angle, so lighting solves on this scene are
    well conditioned.
    """
    rng = np.random.default_rng(seed)
    ax = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    xx, yy = np.meshgrid(ax, ax, indexing="xy")
    rr = xx**2 + yy**2
    inside = rr < 0.9**2
    zz = np.sqrt(np.clip(1.0 - rr, 0.0, None))
    n = np.stack([xx, yy, zz], axis=-1)
    n[~inside] = (0.0, 0.0, 1.0)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    albedo = 0.2 + 0.6 * rng.random((size, size, 3))
    normals = VectorFieldMap(n.astype(np.float32), role="normal")
    return normals, ColorMap(albedo.astype(np.float32), role="albedo"), Mask(inside)


def random_light(rng, lo=-0.4, hi=0.4, dc=1.5):
    coeffs = rng.uniform(lo, hi, 27)
    coeffs[0::9] += dc
    return LightSH(coeffs.astype(np.float32))


def rotate_field(vectors, deg, seed=0):
    """Rotate every vector by `deg` about a per-pixel perpendicular axis."""
    rng = np.random.default_rng(seed)
    v = vectors.astype(np.float64)
    helper = rng.standard_normal(v.shape)
    t = helper - (helper * v).sum(-1, keepdims=True) * v
    t /= np.linalg.norm(t, axis=-1, keepdims=True)
    r = np.radians(deg)
    out = np.cos(r) * v + np.sin(r) * t
    return out / np.linalg.norm(out, axis=-1, keepdims=True)
