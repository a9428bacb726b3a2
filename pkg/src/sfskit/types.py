"""Core value types shared across the toolkit.

All pixel data is stored as float32 numpy arrays in [0, 1] (images, albedo)
or unbounded (shading); normals are unit 3-vectors per pixel with a camera
facing convention of z > 0. Lighting is a 27-vector of second-order
spherical-harmonics coefficients, 9 per RGB channel, laid out channel-major:
``coeffs[9 * channel + basis_index]`` with basis order

    [Y00, Y10, Y11e, Y11o, Y20, Y21e, Y21o, Y22e, Y22o]

This indexing is fixed across the whole system.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_SH = 9
N_SH_RGB = 27

SH_BASIS_NAMES = ("Y00", "Y10", "Y11e", "Y11o", "Y20", "Y21e", "Y21o", "Y22e", "Y22o")

UNIT_NORM_TOL = 1e-6


class DegenerateGeometryError(ValueError):
    """Raised when a lighting solve is rank deficient (e.g. all normals equal)."""


def _as_float32(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float32)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass
class LightSH:
    """27 spherical-harmonics lighting coefficients (9 per RGB channel)."""

    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = _as_float32(self.coeffs, "light coefficients").reshape(-1)
        if self.coeffs.shape != (N_SH_RGB,):
            raise ValueError(f"light must have {N_SH_RGB} coefficients, got {self.coeffs.shape}")

    def channel(self, c: int) -> np.ndarray:
        """The 9 coefficients of channel c (0=R, 1=G, 2=B)."""
        return self.coeffs[N_SH * c : N_SH * (c + 1)]

    def as_matrix(self) -> np.ndarray:
        """Coefficients as a (3, 9) array, row per channel."""
        return self.coeffs.reshape(3, N_SH)

    @classmethod
    def from_matrix(cls, mat) -> "LightSH":
        mat = np.asarray(mat, dtype=np.float32)
        if mat.shape != (3, N_SH):
            raise ValueError(f"expected (3, {N_SH}) coefficient matrix, got {mat.shape}")
        return cls(mat.reshape(-1))

    @classmethod
    def gray(cls, dc: float) -> "LightSH":
        """Uniform light with only the constant-basis coefficient set, same in all channels."""
        coeffs = np.zeros(N_SH_RGB, dtype=np.float32)
        coeffs[0::N_SH] = dc
        return cls(coeffs)


@dataclass
class Mask:
    """Boolean validity map over an H x W grid."""

    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {self.bits.shape}")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def full(cls, height: int, width: int) -> "Mask":
        return cls(np.ones((height, width), dtype=bool))

    def require_nonempty(self) -> None:
        if self.count == 0:
            raise ValueError("mask has no pixels set")


@dataclass
class VectorFieldMap:
    """Per-pixel 3-vectors over an H x W grid.

    role 'normal' promises unit vectors inside the mask; 'generic' makes
    no such promise (raw network output before normalization).
    """

    vectors: np.ndarray
    role: str = "normal"

    def __post_init__(self):
        self.vectors = _as_float32(self.vectors, "vector field")
        if self.vectors.ndim != 3 or self.vectors.shape[2] != 3:
            raise ValueError(f"vector field must be (H, W, 3), got {self.vectors.shape}")
        if self.role not in ("normal", "generic"):
            raise ValueError(f"unknown vector-field role {self.role!r}")

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    def check_unit(self, mask: Mask, tol: float = 1e-4) -> None:
        """Verify masked-in vectors are unit length within tol."""
        norms = np.linalg.norm(self.vectors[mask.bits], axis=-1)
        if norms.size and np.max(np.abs(norms - 1.0)) > tol:
            raise ValueError("vector field is not unit-normalized inside the mask")


@dataclass
class ColorMap:
    """Per-pixel RGB values.

    Roles 'image' and 'albedo' keep masked-in values in [0, 1]; the
    'shading' role may exceed 1 and go negative (second-order SH lighting
    is not clamped inside computations, only at 8-bit export).
    """

    values: np.ndarray
    role: str = "image"

    def __post_init__(self):
        self.values = _as_float32(self.values, "color map")
        if self.values.ndim != 3 or self.values.shape[2] != 3:
            raise ValueError(f"color map must be (H, W, 3), got {self.values.shape}")
        if self.role not in ("image", "albedo", "shading"):
            raise ValueError(f"unknown color-map role {self.role!r}")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def check_range(self, mask: Mask, tol: float = 1e-6) -> None:
        if self.role == "shading":
            return
        vals = self.values[mask.bits]
        if vals.size and (vals.min() < -tol or vals.max() > 1.0 + tol):
            raise ValueError(f"{self.role} values outside [0, 1]")


@dataclass
class LossWeights:
    """Weights of the four training loss terms."""

    w_recon: float = 0.5
    w_normal: float = 0.5
    w_albedo: float = 0.5
    w_light: float = 0.1

    def __post_init__(self):
        for name in ("w_recon", "w_normal", "w_albedo", "w_light"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class Sample:
    """One training record.

    supervision 'ground-truth' means normal/albedo/light are the values the
    image was generated from; 'pseudo' means they were predicted by a model.
    family 'synthetic' images satisfy image == render(normal, albedo, light)
    exactly; 'pseudo-real' images carry extra noise, texture and a mild
    specular term to create a deliberate model mismatch.
    """

    image: ColorMap
    normal: VectorFieldMap
    albedo: ColorMap
    light: LightSH
    mask: Mask
    supervision: str = "ground-truth"
    family: str = "synthetic"
    light_class: int | None = None

    def __post_init__(self):
        if self.supervision not in ("ground-truth", "pseudo"):
            raise ValueError(f"unknown supervision tag {self.supervision!r}")
        if self.family not in ("synthetic", "pseudo-real"):
            raise ValueError(f"unknown family tag {self.family!r}")
        shapes = {
            self.image.values.shape[:2],
            self.normal.vectors.shape[:2],
            self.albedo.values.shape[:2],
            self.mask.bits.shape,
        }
        if len(shapes) != 1:
            raise ValueError(f"sample maps disagree on dimensions: {shapes}")


@dataclass
class Decomposition:
    """A complete (normal, albedo, light) decomposition of one image."""

    normal: VectorFieldMap
    albedo: ColorMap
    light: LightSH
    mask: Mask = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.mask is None:
            self.mask = Mask.full(self.normal.height, self.normal.width)


def check_same_dims(*maps) -> tuple[int, int]:
    """Raise unless all maps share one (H, W); returns it."""
    dims = set()
    for m in maps:
        if isinstance(m, Mask):
            dims.add(m.bits.shape)
        elif isinstance(m, (VectorFieldMap, ColorMap)):
            dims.add((m.height, m.width))
        else:
            raise TypeError(f"cannot take dimensions of {type(m).__name__}")
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch across maps: {sorted(dims)}")
    return dims.pop()
