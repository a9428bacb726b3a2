"""Procedural ground-truth generator.

Scenes are height fields built from a handful of anisotropic Gaussian bumps
over an elliptical mask, lit by second-order SH draws from a parameterized
distribution. Two families share the same underlying geometry sampler:

  synthetic    image == render(normal, albedo, light) exactly
  pseudo-real  same renderer, plus high-frequency surface detail, albedo
               texture with dark patches, a mild white specular lobe and
               pixel noise. The extras create a deliberate model mismatch;
               the generating (N, A, L) is kept for evaluation only.

Everything is a pure function of its seed arguments. Per-sample seeds are
derived with np.random.SeedSequence((seed, index)) so generation order and
worker count cannot change the output.

Coordinates: column j maps to x in [-1, 1] left to right, row i maps to
y in [1, -1] top to bottom (y up), z toward the viewer.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import io as sfio
from . import nets, shcore
from .types import ColorMap, LightSH, Mask, Sample, VectorFieldMap

logger = logging.getLogger(__name__)

FAMILIES = ("synthetic", "pseudo-real")

MASK_COVERAGE = (0.30, 0.80)
BUMP_COUNT = (5, 12)

# Accepted lights keep probe shading mean inside SHADING_MEAN_RANGE and the
# per-pixel extremes inside [SHADING_MIN, SHADING_MAX]. The extremes are not
# part of the published distribution contract; they guarantee that shading
# stays nonnegative and that albedo * shading stays below 1, so rendered
# images are valid without clamping.
SHADING_MEAN_RANGE = (0.2, 1.2)
SHADING_MIN = 0.02
SHADING_MAX = 1.04

_MAX_RESAMPLE = 1000


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def _check_family(family: str) -> None:
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}, expected one of {FAMILIES}")


def _grid(size: int):
    """(y, x) coordinate vectors for the pixel-center grid."""
    x = np.linspace(-1.0, 1.0, size)
    y = np.linspace(1.0, -1.0, size)
    return y, x


def height_to_normals(z: np.ndarray) -> np.ndarray:
    """Normals of the surface (x, y, z(x, y)) over the [-1, 1]^2 grid.

    Central finite differences; n = normalize(-dz/dx, -dz/dy, 1), so a flat
    field gives (0, 0, 1) everywhere.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] != z.shape[1]:
        raise ValueError(f"height field must be square 2-D, got {z.shape}")
    y, x = _grid(z.shape[0])
    gy, gx = np.gradient(z, y, x, edge_order=2)
    n = np.stack([-gx, -gy, np.ones_like(z)], axis=-1)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    return n.astype(np.float32)


def _ellipse_mask(rng: np.random.Generator, size: int) -> Mask:
    y, x = _grid(size)
    xx, yy = np.meshgrid(x, y)
    lo, hi = MASK_COVERAGE
    for _ in range(_MAX_RESAMPLE):
        a, b = rng.uniform(0.58, 0.98, size=2)
        cx, cy = rng.uniform(-0.12, 0.12, size=2)
        bits = ((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2 <= 1.0
        cover = bits.mean()
        if lo <= cover <= hi:
            return Mask(bits)
    raise RuntimeError("mask sampler failed to hit the coverage bounds")


def _bump_field(rng: np.random.Generator, size: int, n_bumps: int) -> np.ndarray:
    y, x = _grid(size)
    xx, yy = np.meshgrid(x, y)
    z = np.zeros((size, size))
    for _ in range(n_bumps):
        cx, cy = rng.uniform(-0.7, 0.7, size=2)
        s1, s2 = rng.uniform(0.12, 0.45, size=2)
        theta = rng.uniform(0.0, np.pi)
        amp = rng.uniform(0.06, 0.30) * (1.0 if rng.random() < 0.65 else -1.0)
        ct, st = np.cos(theta), np.sin(theta)
        u = ct * (xx - cx) + st * (yy - cy)
        v = -st * (xx - cx) + ct * (yy - cy)
        z += amp * np.exp(-0.5 * ((u / s1) ** 2 + (v / s2) ** 2))
    return z


def _bandlimited_noise(rng: np.random.Generator, size: int) -> np.ndarray:
    """Zero-mean unit-std noise with energy between ~2 and ~5 pixel periods."""
    white = rng.standard_normal((size, size))
    band = ndimage.gaussian_filter(white, 1.0) - ndimage.gaussian_filter(white, 2.2)
    return band / (band.std() + 1e-12)


def sample_shape(seed, family: str, size: int = 64) -> tuple[VectorFieldMap, Mask]:
    """Random surface normals plus the elliptical validity mask.

    The pseudo-real family perturbs the same height field with band-limited
    high-frequency detail (a wrinkle proxy) before differentiation, so the
    two families share coarse geometry for a given seed.
    """
    _check_family(family)
    rng = _rng(seed)
    mask = _ellipse_mask(rng, size)
    z = _bump_field(rng, size, int(rng.integers(BUMP_COUNT[0], BUMP_COUNT[1] + 1)))
    detail = _bandlimited_noise(rng, size)  # always drawn: keeps families seed-aligned
    if family == "pseudo-real":
        z = z + rng.uniform(0.010, 0.030) * detail
    return VectorFieldMap(height_to_normals(z), role="normal"), mask


def sample_albedo(seed, family: str, size: int = 64) -> ColorMap:
    """Smooth low-frequency reflectance in [0.15, 0.95].

    pseudo-real adds gray high-frequency texture and 1-3 soft dark
    elliptical patches, then clips to [0.03, 0.95].
    """
    _check_family(family)
    rng = _rng(seed)
    coarse = rng.uniform(0.0, 1.0, size=(3, 5, 5))
    chans = []
    for c in range(3):
        f = ndimage.zoom(coarse[c], size / 5.0, order=3, mode="nearest")
        f = (f - f.min()) / max(f.max() - f.min(), 1e-12)
        lo = rng.uniform(0.18, 0.40)
        hi = rng.uniform(lo + 0.20, 0.93)
        chans.append(lo + (hi - lo) * f)
    albedo = np.stack(chans, axis=-1)

    if family == "pseudo-real":
        albedo = albedo + 0.10 * _bandlimited_noise(rng, size)[..., None]
        y, x = _grid(size)
        xx, yy = np.meshgrid(x, y)
        for _ in range(int(rng.integers(1, 4))):
            cx, cy = rng.uniform(-0.6, 0.6, size=2)
            rx, ry = rng.uniform(0.06, 0.25, size=2)
            factor = rng.uniform(0.30, 0.65)
            q = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2
            inside = np.clip((1.0 - q) * 4.0, 0.0, 1.0)  # soft-edged indicator
            albedo = albedo * (1.0 - (1.0 - factor) * inside)[..., None]
        albedo = np.clip(albedo, 0.03, 0.95)

    return ColorMap(albedo.astype(np.float32), role="albedo")


# ---------------------------------------------------------------------------
# lighting


@dataclass
class LightDistribution:
    """Coefficient-wise Gaussian over 27 SH coefficients.

    Draws are rejection-resampled until shading over a hemisphere probe
    satisfies the mean/extreme bounds above. The DC coefficient of each
    channel is floored at ambient_floor before the probe test.
    """

    mean: np.ndarray
    stddev: np.ndarray
    ambient_floor: float = 1.0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(27)
        self.stddev = np.asarray(self.stddev, dtype=np.float64).reshape(27)
        if np.any(self.stddev < 0):
            raise ValueError("stddev must be nonnegative")


def default_light_distribution() -> LightDistribution:
    mean = np.zeros(27)
    std = np.zeros(27)
    for c in range(3):
        mean[9 * c + 0], std[9 * c + 0] = 1.8, 0.35   # DC
        mean[9 * c + 1], std[9 * c + 1] = 0.45, 0.30  # z: bias toward frontal light
        std[9 * c + 2] = std[9 * c + 3] = 0.30        # x, y
        std[9 * c + 4 : 9 * c + 9] = 0.15             # band 2
    return LightDistribution(mean, std, ambient_floor=1.0)


_PROBE_CACHE: dict[int, np.ndarray] = {}


def _probe_basis(size: int = 48) -> np.ndarray:
    """SH basis rows over a hemisphere of normals, (P, 9)."""
    if size not in _PROBE_CACHE:
        y, x = _grid(size)
        xx, yy = np.meshgrid(x, y)
        r2 = xx**2 + yy**2
        keep = r2 <= 0.995**2
        n = np.stack([xx[keep], yy[keep], np.sqrt(1.0 - r2[keep])], axis=-1)
        _PROBE_CACHE[size] = shcore.sh_basis_array(n)
    return _PROBE_CACHE[size]


def _light_ok(coeffs: np.ndarray) -> bool:
    basis = _probe_basis()
    shading = basis @ coeffs.reshape(3, 9).T  # (P, 3)
    lo, hi = SHADING_MEAN_RANGE
    return (
        lo <= shading.mean() <= hi
        and shading.min() >= SHADING_MIN
        and shading.max() <= SHADING_MAX
    )


def _draw_light(dist: LightDistribution, rng: np.random.Generator) -> tuple[LightSH, int]:
    """One accepted light plus the number of raw draws it took."""
    for attempt in range(1, _MAX_RESAMPLE + 1):
        coeffs = rng.normal(dist.mean, dist.stddev)
        for c in range(3):
            coeffs[9 * c] = max(coeffs[9 * c], dist.ambient_floor)
        if _light_ok(coeffs):
            return LightSH(coeffs.astype(np.float32)), attempt
    raise RuntimeError(
        "light sampler rejected %d consecutive draws; the distribution is "
        "inconsistent with the shading bounds" % _MAX_RESAMPLE
    )


def sample_light(dist: LightDistribution, seed) -> LightSH:
    light, _ = _draw_light(dist, _rng(seed))
    return light


def estimate_acceptance(dist: LightDistribution, n: int = 200, seed: int = 0) -> float:
    """Fraction of raw draws passing the shading bounds."""
    rng = _rng(seed)
    hits = 0
    for _ in range(n):
        coeffs = rng.normal(dist.mean, dist.stddev)
        for c in range(3):
            coeffs[9 * c] = max(coeffs[9 * c], dist.ambient_floor)
        hits += _light_ok(coeffs)
    return hits / n


# ---------------------------------------------------------------------------
# dataset assembly


def _dominant_direction(light: LightSH) -> np.ndarray | None:
    """Unit direction of the band-1 lobe averaged over channels, or None."""
    m = light.as_matrix()
    v = np.array([m[:, 2].mean(), m[:, 3].mean(), m[:, 1].mean()], dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm < 1e-6:
        return None
    return v / norm


def _pseudo_real_image(
    image: np.ndarray,
    normals: VectorFieldMap,
    light: LightSH,
    mask: Mask,
    noise_sigma: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Specular lobe + pixel noise on top of the lambertian render."""
    out = image.astype(np.float64)
    d = _dominant_direction(light)
    if d is not None:
        ks = rng.uniform(0.04, 0.10)
        power = rng.uniform(24.0, 64.0)
        half = d + np.array([0.0, 0.0, 1.0])
        half /= np.linalg.norm(half)
        ndoth = np.clip(normals.vectors.astype(np.float64) @ half, 0.0, None)
        out += (ks * ndoth**power)[..., None]
    out += rng.normal(0.0, noise_sigma, size=out.shape)
    out = np.clip(out, 0.0, 1.0)
    out[~mask.bits] = 0.0
    return out.astype(np.float32)


def make_dataset(
    n: int,
    seed: int,
    family: str,
    noise_sigma: float = 0.01,
    size: int = 64,
    dist: LightDistribution | None = None,
) -> list[Sample]:
    """Generate n samples, a pure function of the arguments.

    Synthetic images are exact renders. Pseudo-real images add a white
    Blinn-Phong lobe along the dominant band-1 direction (intensity <= 0.1),
    Gaussian pixel noise, and a [0, 1] clamp; their ground truth is kept on
    the Sample for evaluation but must not be used as training supervision.
    """
    _check_family(family)
    if dist is None:
        dist = default_light_distribution()
    samples = []
    attempts = 0
    for index in range(n):
        children = np.random.SeedSequence((seed, index)).spawn(4)
        normals, mask = sample_shape(children[0], family, size)
        albedo = sample_albedo(children[1], family, size)
        light, tries = _draw_light(dist, _rng(children[2]))
        attempts += tries
        image = shcore.render(normals, albedo, light, mask)
        if family == "pseudo-real":
            values = _pseudo_real_image(
                image.values, normals, light, mask, noise_sigma, _rng(children[3])
            )
            image = ColorMap(values, role="image")
        samples.append(
            Sample(image=image, normal=normals, albedo=albedo, light=light, mask=mask,
                   supervision="ground-truth", family=family)
        )
    if n:
        logger.info(
            "generated %d %s samples at %dx%d (light acceptance %.1f%%)",
            n, family, size, size, 100.0 * n / attempts,
        )
    return samples


def pseudo_label(model, samples: list[Sample], batch_size: int = 32) -> list[Sample]:
    """Swap supervision targets for the model's own decomposition.

    Images and masks are carried over untouched; supervision flips to
    'pseudo'. The model sees images only, never the stored ground truth.
    Bitwise reproduction of the labels requires calling decompose with the
    same chunking: BLAS kernel choice depends on matrix shape, so different
    batch sizes can differ in the last ulp.
    """
    out = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        images = np.stack([s.image.values.transpose(2, 0, 1) for s in chunk])
        masks = np.stack([s.mask.bits for s in chunk])
        for s, dec in zip(chunk, nets.decompose(model, images, masks)):
            out.append(
                Sample(image=s.image, normal=dec.normal, albedo=dec.albedo,
                       light=dec.light, mask=s.mask, supervision="pseudo",
                       family=s.family, light_class=s.light_class)
            )
    return out


# ---------------------------------------------------------------------------
# 19-light classification benchmark


def benchmark_light_directions() -> np.ndarray:
    """19 unit directions on two elevation arcs: 13 at 20 deg, 6 at 50 deg."""
    dirs = []
    for el, azimuths in ((20.0, np.linspace(-90, 90, 13)), (50.0, np.linspace(-75, 75, 6))):
        for az in azimuths:
            az_r, el_r = np.radians(az), np.radians(el)
            dirs.append(
                [np.sin(az_r) * np.cos(el_r), np.sin(el_r), np.cos(az_r) * np.cos(el_r)]
            )
    d = np.asarray(dirs, dtype=np.float64)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def benchmark_lights(intensity: float = 0.55, ambient: float = 0.40) -> list[LightSH]:
    return [
        shcore.dir_light_to_sh(d, intensity, ambient) for d in benchmark_light_directions()
    ]


def make_light_benchmark(
    seed: int,
    n_shapes: int = 40,
    n_train_shapes: int = 30,
    size: int = 64,
) -> tuple[list[Sample], list[Sample]]:
    """(train, test) splits of every shape rendered under all 19 lights.

    Shapes [0, n_train_shapes) go to train, the rest to test, so the split
    is subject-disjoint. Each Sample carries its light_class.
    """
    if not 0 < n_train_shapes < n_shapes:
        raise ValueError("need at least one train and one test shape")
    lights = benchmark_lights()
    train, test = [], []
    for shape_idx in range(n_shapes):
        children = np.random.SeedSequence((seed, shape_idx)).spawn(2)
        normals, mask = sample_shape(children[0], "synthetic", size)
        albedo = sample_albedo(children[1], "synthetic", size)
        bucket = train if shape_idx < n_train_shapes else test
        for cls, light in enumerate(lights):
            image = shcore.render(normals, albedo, light, mask)
            bucket.append(
                Sample(image=image, normal=normals, albedo=albedo, light=light,
                       mask=mask, supervision="ground-truth", family="synthetic",
                       light_class=cls)
            )
    return train, test


# ---------------------------------------------------------------------------
# persistence


MANIFEST_NAME = "manifest.json"


def save_dataset(samples: list[Sample], outdir) -> None:
    """Write FMAP components plus a manifest listing files, tags and lights."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(samples):
        stem = f"{i:04d}"
        names = {part: f"{stem}.{part}.fmap" for part in ("image", "normal", "albedo", "mask")}
        sfio.write_fmap(outdir / names["image"], s.image.values)
        sfio.write_fmap(outdir / names["normal"], s.normal.vectors)
        sfio.write_fmap(outdir / names["albedo"], s.albedo.values)
        sfio.write_mask_fmap(outdir / names["mask"], s.mask)
        entries.append(
            {
                "index": i,
                "family": s.family,
                "supervision": s.supervision,
                "light": [float(v) for v in s.light.coeffs],
                "light_class": s.light_class,
                **names,
            }
        )
    manifest = {
        "format": "sfskit-dataset",
        "version": 1,
        "count": len(samples),
        "samples": entries,
    }
    with open(outdir / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path) -> list[Sample]:
    path = Path(path)
    with open(path / MANIFEST_NAME, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "sfskit-dataset" or manifest.get("version") != 1:
        raise ValueError(f"{path} does not hold a version-1 sfskit dataset")
    samples = []
    for e in manifest["samples"]:
        samples.append(
            Sample(
                image=ColorMap(sfio.read_fmap(path / e["image"]), role="image"),
                normal=VectorFieldMap(sfio.read_fmap(path / e["normal"]), role="normal"),
                albedo=ColorMap(sfio.read_fmap(path / e["albedo"]), role="albedo"),
                light=LightSH(np.asarray(e["light"], dtype=np.float32)),
                mask=sfio.read_mask_fmap(path / e["mask"]),
                supervision=e["supervision"],
                family=e["family"],
                light_class=e["light_class"],
            )
        )
    return samples
