"""Lambertian shading and rendering under second-order spherical harmonics.

The image formation model is, per pixel p and channel c:

    I_c(p) = A_c(p) * ( Y(n(p)) . L_c )

where Y is the 9-term SH basis evaluated at the unit surface normal, A is
albedo and L_c are the 9 lighting coefficients of the channel. Shading
(the ``Y . L`` factor) is deliberately not clamped at zero: a truncated SH
expansion legitimately goes negative, and clamping is applied only when
exporting 8-bit displays.

Losses here are masked means (over masked pixels and channels), so that
the loss weights are independent of image resolution.

``dir_light_to_sh`` converts a directional source to SH coefficients by
attenuating each band of the direction's basis vector with the lambertian
(clamped-cosine) kernel gains

    a0 = pi, a1 = 2*pi/3, a2 = pi/4

and adding an ambient term on the constant basis function, scaled so that
an ambient value of 1 contributes exactly 1 to shading everywhere.
"""

from __future__ import annotations

import numpy as np

from .types import (
    ColorMap,
    LightSH,
    LossWeights,
    Mask,
    VectorFieldMap,
    check_same_dims,
)

# Closed-form basis constants, as plain floats: weak scalars under NEP 50,
# so multiplying a float32 array by them does not promote it.
SH_C0 = float(0.5 / np.sqrt(np.pi))                # Y00 = 1/sqrt(4 pi)
SH_C1 = float(np.sqrt(3.0 / (4.0 * np.pi)))        # linear band
SH_C20 = float(0.5 * np.sqrt(5.0 / (4.0 * np.pi)))     # Y20 = c20 (3z^2 - 1)
SH_C21 = float(3.0 * np.sqrt(5.0 / (12.0 * np.pi)))    # xz, yz and xy terms
SH_C22 = float(1.5 * np.sqrt(5.0 / (12.0 * np.pi)))    # Y22e = c22 (x^2 - y^2)

# Band gains of the lambertian kernel, k-th basis term belongs to band BAND_OF[k].
LAMBERT_BAND_GAINS = (np.pi, 2.0 * np.pi / 3.0, np.pi / 4.0)
BAND_OF = (0, 1, 1, 1, 2, 2, 2, 2, 2)

NORMALIZE_EPS = 1e-6


def sh_basis_array(normals: np.ndarray) -> np.ndarray:
    """Evaluate the 9-term SH basis at every vector of an (..., 3) array.

    Basis order: [Y00, Y10, Y11e, Y11o, Y20, Y21e, Y21o, Y22e, Y22o],
    with Y10 along z, Y11e along x and Y11o along y. No unit check is done
    here; callers validate where the model requires unit normals.
    """
    n = np.asarray(normals)
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    out = np.empty(n.shape[:-1] + (9,), dtype=n.dtype)
    out[..., 0] = SH_C0
    out[..., 1] = SH_C1 * z
    out[..., 2] = SH_C1 * x
    out[..., 3] = SH_C1 * y
    out[..., 4] = SH_C20 * (3.0 * z * z - 1.0)
    out[..., 5] = SH_C21 * x * z
    out[..., 6] = SH_C21 * y * z
    out[..., 7] = SH_C22 * (x * x - y * y)
    out[..., 8] = SH_C21 * x * y
    return out


def sh_basis(normal) -> np.ndarray:
    """SH basis of a single unit 3-vector.

    Raises ValueError if the input norm deviates from 1 by more than 1e-6.
    """
    n = np.asarray(normal, dtype=np.float64).reshape(-1)
    if n.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {n.shape}")
    if abs(np.linalg.norm(n) - 1.0) > NORMALIZE_EPS:
        raise ValueError(f"normal must be unit length, |n| = {np.linalg.norm(n):.8f}")
    return sh_basis_array(n)


def _check_normals(normals: VectorFieldMap, mask: Mask) -> None:
    vecs = normals.vectors[mask.bits].astype(np.float64)
    if vecs.size:
        err = np.abs(np.linalg.norm(vecs, axis=-1) - 1.0).max()
        if err > 1e-5:
            raise ValueError(f"normals are not unit inside the mask (max |norm-1| = {err:.2e})")


def shading(normals: VectorFieldMap, light: LightSH, mask: Mask) -> ColorMap:
    """Per-pixel shading Y(n)^T L_c for each channel; 0 outside the mask."""
    check_same_dims(normals, mask)
    _check_normals(normals, mask)
    basis = sh_basis_array(normals.vectors)                      # (H, W, 9) float32
    s = np.einsum("hwk,ck->hwc", basis, light.as_matrix())
    s[~mask.bits] = 0.0
    return ColorMap(s, role="shading")


def render(
    normals: VectorFieldMap, albedo: ColorMap, light: LightSH, mask: Mask
) -> ColorMap:
    """Render an image as albedo * shading, unclamped; 0 outside the mask."""
    check_same_dims(normals, albedo, mask)
    albedo.check_range(mask)
    s = shading(normals, light, mask)
    img = albedo.values * s.values
    img[~mask.bits] = 0.0
    return ColorMap(img, role="image")


def _masked_mean_abs(a: np.ndarray, b: np.ndarray, mask: Mask) -> float:
    mask.require_nonempty()
    diff = np.abs(a[mask.bits].astype(np.float64) - b[mask.bits].astype(np.float64))
    return float(diff.mean())


def recon_loss(
    image: ColorMap,
    normals: VectorFieldMap,
    albedo: ColorMap,
    light: LightSH,
    mask: Mask,
) -> float:
    """Masked mean L1 between the image and its re-render from (N, A, L).

    The re-render runs through the same float32 path as ``render``, so a
    round trip on matching components is exactly zero.
    """
    check_same_dims(image, normals, albedo, mask)
    rendered = render(normals, albedo, light, mask)
    return _masked_mean_abs(image.values, rendered.values, mask)


def normal_loss(pred: VectorFieldMap, gt: VectorFieldMap, mask: Mask) -> float:
    """Masked mean L1 over the 3 normal components."""
    check_same_dims(pred, gt, mask)
    return _masked_mean_abs(pred.vectors, gt.vectors, mask)


def albedo_loss(pred: ColorMap, gt: ColorMap, mask: Mask) -> float:
    """Masked mean L1 over the 3 albedo channels."""
    check_same_dims(pred, gt, mask)
    return _masked_mean_abs(pred.values, gt.values, mask)


def light_loss(pred: LightSH, gt: LightSH) -> float:
    """Mean squared error over the 27 lighting coefficients."""
    diff = pred.coeffs.astype(np.float64) - gt.coeffs.astype(np.float64)
    return float(np.mean(diff * diff))


def total_loss(
    e_recon: float,
    e_normal: float,
    e_albedo: float,
    e_light: float,
    weights: LossWeights = LossWeights(),
) -> float:
    return (
        weights.w_recon * e_recon
        + weights.w_normal * e_normal
        + weights.w_albedo * e_albedo
        + weights.w_light * e_light
    )


def normalize_normals(raw: VectorFieldMap, mask: Mask) -> VectorFieldMap:
    """Scale each masked vector to unit length; degenerate vectors and
    masked-out pixels become the camera-facing normal (0, 0, 1).

    The division uses max(|v|, 1e-6), so a zero vector maps to (0, 0, 0)
    scaled by 1e6 -- still zero -- and is then replaced by (0, 0, 1).
    """
    check_same_dims(raw, mask)
    v = raw.vectors
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    unit = v / np.maximum(norms, NORMALIZE_EPS)
    # Anything that could not be normalized points at the camera.
    degenerate = norms[..., 0] <= NORMALIZE_EPS
    out = unit.astype(np.float32)
    out[degenerate] = (0.0, 0.0, 1.0)
    out[~mask.bits] = (0.0, 0.0, 1.0)
    return VectorFieldMap(out, role="normal")


def dir_light_to_sh(direction, intensity, ambient) -> LightSH:
    """SH coefficients of a directional source plus an ambient floor.

    Per channel c: L_c = ambient_c * (sqrt(4 pi), 0, ..., 0)
                       + intensity_c * a_band(k) * Y_k(direction),
    with the band gains a0 = pi, a1 = 2 pi / 3, a2 = pi / 4 (the lambertian
    kernel). An ambient of 1 therefore contributes exactly 1 to shading.

    intensity and ambient may be scalars (gray) or length-3 per channel.
    """
    d = np.asarray(direction, dtype=np.float64).reshape(-1)
    if d.shape != (3,):
        raise ValueError(f"direction must be a 3-vector, got shape {d.shape}")
    if abs(np.linalg.norm(d) - 1.0) > NORMALIZE_EPS:
        raise ValueError("direction must be unit length")
    intensity = np.broadcast_to(np.asarray(intensity, dtype=np.float64).reshape(-1), (3,))
    ambient = np.broadcast_to(np.asarray(ambient, dtype=np.float64).reshape(-1), (3,))

    gains = np.array([LAMBERT_BAND_GAINS[b] for b in BAND_OF])
    directional = gains * sh_basis_array(d)                      # (9,)
    mat = np.outer(intensity, directional)                       # (3, 9)
    mat[:, 0] += ambient * np.sqrt(4.0 * np.pi)
    return LightSH.from_matrix(mat.astype(np.float32))
