"""Synthetic image degradations: fog, low light, snow, rain, and noise.

All operations are pure functions over H x W x 3 float images in [0, 1];
outputs are always clamped back into [0, 1]. Randomness is fully seeded
so identical (image, spec, seed) triples are bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import imageio

__all__ = [
    "ParameterError",
    "DegradationSpec",
    "ManifestEntry",
    "DatasetManifest",
    "apply_fog",
    "apply_dark",
    "apply_snow",
    "apply_rain",
    "apply_noise",
    "apply_spec",
    "make_rain_field",
    "make_snow_mask",
    "snow_mask",
    "sample_spec",
    "build_manifest",
    "materialize",
    "KINDS",
    "NOISE_LEVELS",
]

KINDS = ("fog", "dark", "snow", "rain", "noise")

# Test-time noise levels, in 8-bit units.
NOISE_LEVELS = (15.0, 25.0, 50.0)

RAIN_THRESHOLD_QUANTILE = 0.97
RAIN_ANGLE_DEG = 75.0
RAIN_BLUR_LENGTH = 12

SNOW_DENSITIES = {"light": 0.990, "medium": 0.975, "heavy": 0.955}


class ParameterError(ValueError):
    """A degradation parameter is outside its valid range."""


@dataclass(frozen=True)
class DegradationSpec:
    """Tagged description of one degradation with its parameters and seed."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed}

    @staticmethod
    def from_json(obj: dict) -> "DegradationSpec":
        return DegradationSpec(kind=obj["kind"], params=dict(obj.get("params", {})),
                               seed=int(obj.get("seed", 0)))


def _clamp01(pixels: np.ndarray) -> np.ndarray:
    return np.clip(pixels, 0.0, 1.0)


def apply_fog(img: np.ndarray, atmospheric_light: float = 0.5, i: int = 0) -> np.ndarray:
    """Atmospheric-scattering fog: I*exp(-beta*d) + A*(1 - exp(-beta*d)).

    beta = 0.05 + 0.01*i with i in 0..9; d = -0.04*rho + sqrt(max(h, w))
    where rho is the Euclidean distance to the central pixel.
    """
    if not 0.0 <= atmospheric_light <= 1.0:
        raise ParameterError(f"atmospheric light {atmospheric_light} outside [0, 1]")
    if not (isinstance(i, (int, np.integer)) and 0 <= i <= 9):
        raise ParameterError(f"fog intensity index {i} outside 0..9")
    h, w = img.shape[:2]
    beta = 0.05 + 0.01 * int(i)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    rho = np.hypot(ys - h // 2, xs - w // 2)
    d = -0.04 * rho + np.sqrt(max(h, w))
    t = np.exp(-beta * d)[..., None]
    return _clamp01(img * t + atmospheric_light * (1.0 - t))


def apply_dark(img: np.ndarray, gamma: float) -> np.ndarray:
    """Gamma darkening: I**gamma (gamma > 1 darkens)."""
    if gamma <= 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    return _clamp01(img ** gamma)


def apply_snow(img: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Additive snow overlay: clamp(I + M)."""
    h, w = img.shape[:2]
    if mask.shape[:2] != (h, w):
        mask = _rescale_mask(mask, h, w)
    if mask.ndim == 2:
        mask = mask[..., None]
    return _clamp01(img + mask)


def apply_rain(img: np.ndarray, beta: float = 0.8, seed: int = 0, *,
               angle_deg: float = RAIN_ANGLE_DEG, overlay: bool = False) -> np.ndarray:
    """Rain streaks: I*(1-R) + beta*I per channel (as printed in the source
    formula), or the overlay variant I*(1-R) + beta*R when `overlay`."""
    if not 0.0 <= beta <= 1.0:
        raise ParameterError(f"rain beta {beta} outside [0, 1]")
    rain = make_rain_field(img.shape[0], img.shape[1], seed, angle_deg=angle_deg)
    r = rain[..., None]
    if overlay:
        return _clamp01(img * (1.0 - r) + beta * r)
    return _clamp01(img * (1.0 - r) + beta * img)


def apply_noise(img: np.ndarray, sigma: float, seed: int = 0) -> np.ndarray:
    """Additive Gaussian noise at 8-bit level sigma: clamp(I + N*sigma/255)."""
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img.copy()
    noise = np.random.default_rng(seed).standard_normal(img.shape)
    return _clamp01(img + noise * (sigma / 255.0))


def make_rain_field(h: int, w: int, seed: int, *, angle_deg: float = RAIN_ANGLE_DEG,
                    threshold_quantile: float = RAIN_THRESHOLD_QUANTILE,
                    blur_length: int = RAIN_BLUR_LENGTH) -> np.ndarray:
    """Seeded streak field in [0, 1]: noise -> threshold -> rotate -> motion blur."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((h, w))
    streaks = (noise > np.quantile(noise, threshold_quantile)).astype(np.float64)
    streaks = ndimage.rotate(streaks, angle_deg, reshape=False, order=1, mode="constant")
    kernel = _line_kernel(blur_length, angle_deg)
    field = ndimage.convolve(streaks, kernel, mode="constant")
    top = field.max()
    if top > 0:
        field /= top
    return np.clip(field, 0.0, 1.0)


def _line_kernel(length: int, angle_deg: float) -> np.ndarray:
    """Normalized motion-blur kernel along the streak axis."""
    k = np.zeros((length, length))
    theta = np.deg2rad(angle_deg)
    c = (length - 1) / 2.0
    for t in np.linspace(-c, c, 2 * length):
        y = int(round(c - t * np.sin(theta)))
        x = int(round(c + t * np.cos(theta)))
        if 0 <= y < length and 0 <= x < length:
            k[y, x] = 1.0
    return k / k.sum()


# -- snow masks --------------------------------------------------------------

_MASK_SEEDS = {"light": 101, "medium": 202, "heavy": 303}


def make_snow_mask(h: int, w: int, density: str = "medium", seed: int | None = None) -> np.ndarray:
    """Procedural flake mask: multi-octave value noise thresholded by density."""
    if density not in SNOW_DENSITIES:
        raise ParameterError(f"unknown snow density {density!r}")
    rng = np.random.default_rng(_MASK_SEEDS[density] if seed is None else seed)
    acc = np.zeros((h, w))
    for cell, gain in ((4, 1.0), (8, 0.6), (16, 0.35)):
        coarse = rng.standard_normal((max(h // cell, 2), max(w // cell, 2)))
        acc += gain * ndimage.zoom(coarse, (h / coarse.shape[0], w / coarse.shape[1]), order=1)
    acc += 0.35 * rng.standard_normal((h, w))
    cut = np.quantile(acc, SNOW_DENSITIES[density])
    mask = np.clip((acc - cut) / (acc.max() - cut + 1e-12), 0.0, 1.0)
    return ndimage.gaussian_filter(mask, sigma=0.6)


def snow_mask(density: str = "medium") -> np.ndarray:
    """Load one of the bundled grayscale flake masks (H x W in [0, 1])."""
    if density not in SNOW_DENSITIES:
        raise ParameterError(f"unknown snow density {density!r}")
    ref = resources.files("promptenh").joinpath(f"data/snow_{density}.png")
    with resources.as_file(ref) as path:
        if not path.exists():
            return make_snow_mask(256, 256, density)
        return imageio.read_image(path)[..., 0]


def _rescale_mask(mask: np.ndarray, h: int, w: int) -> np.ndarray:
    """Plain bilinear (align_corners=False) resize of a 2-D mask."""
    from .ops import _interp_matrix  # matrices shared with the tensor op

    mh = _interp_matrix(mask.shape[0], h, np.float64)
    mw = _interp_matrix(mask.shape[1], w, np.float64)
    return mh @ mask @ mw.T


# -- spec application & manifests ----------------------------------------------

def apply_spec(img: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    p = spec.params
    if spec.kind == "none":
        return img.copy()
    if spec.kind == "fog":
        return apply_fog(img, p.get("A", 0.5), int(p.get("i", 0)))
    if spec.kind == "dark":
        return apply_dark(img, p["gamma"])
    if spec.kind == "snow":
        return apply_snow(img, snow_mask(p.get("density", "medium")))
    if spec.kind == "rain":
        return apply_rain(img, p.get("beta", 0.8), spec.seed,
                          overlay=bool(p.get("overlay", False)))
    if spec.kind == "noise":
        return apply_noise(img, p["sigma"], spec.seed)
    raise ParameterError(f"unknown degradation kind {spec.kind!r}")


def sample_spec(kind: str, rng: np.random.Generator, seed: int) -> DegradationSpec:
    """Draw per-kind parameters the way the synthetic datasets are built."""
    if kind == "fog":
        return DegradationSpec("fog", {"A": 0.5, "i": int(rng.integers(0, 10))}, seed)
    if kind == "dark":
        return DegradationSpec("dark", {"gamma": float(rng.uniform(1.5, 5.0))}, seed)
    if kind == "snow":
        return DegradationSpec("snow", {"density": "medium"}, seed)
    if kind == "rain":
        return DegradationSpec("rain", {"beta": 0.8}, seed)
    if kind == "noise":
        return DegradationSpec("noise", {"sigma": float(rng.choice(NOISE_LEVELS))}, seed)
    raise ParameterError(f"unknown degradation kind {kind!r}")


@dataclass(frozen=True)
class ManifestEntry:
    src: str
    dst: str
    spec: DegradationSpec
    annotation: str | None = None


class DatasetManifest:
    """Bookkeeping of (clean, degraded, spec) triples, one JSON object per line."""

    def __init__(self, entries: list[ManifestEntry]):
        paths = [e.dst for e in entries]
        if len(set(paths)) != len(paths):
            raise ParameterError("manifest destination paths must be unique")
        self.entries = entries

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def save(self, path: str | Path) -> None:
        lines = []
        for e in self.entries:
            rec = {"src": e.src, "dst": e.dst, **e.spec.to_json()}
            if e.annotation:
                rec["annotation"] = e.annotation
            lines.append(json.dumps(rec, sort_keys=True))
        Path(path).write_text("\n".join(lines) + "\n")

    @staticmethod
    def load(path: str | Path) -> "DatasetManifest":
        entries = []
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            entries.append(ManifestEntry(src=rec["src"], dst=rec["dst"],
                                         spec=DegradationSpec.from_json(rec),
                                         annotation=rec.get("annotation")))
        return DatasetManifest(entries)


def _image_seed(manifest_seed: int, index: int) -> int:
    # splitmix-style spread so per-image streams are independent
    z = (manifest_seed + 0x9E3779B97F4A7C15 * (index + 1)) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    return (z ^ (z >> 31)) & 0x7FFFFFFFFFFFFFFF


def build_manifest(src_dir: str | Path, kinds=KINDS, mix: float = 2.0 / 3.0,
                   seed: int = 0, dst_dir: str | Path | None = None) -> DatasetManifest:
    """Assign one spec per source image; a `mix` fraction is degraded.

    Deterministic under `seed`: both the subset of degraded images and
    each per-image parameter draw derive from it.
    """
    src_dir = Path(src_dir)
    images = sorted(p for p in src_dir.iterdir()
                    if p.suffix.lower() in (".png", ".ppm"))
    if not images:
        raise ParameterError(f"{src_dir}: no .png/.ppm images found")
    kinds = tuple(kinds)
    dst_dir = Path(dst_dir) if dst_dir is not None else src_dir / "degraded"
    rng = np.random.default_rng(seed)
    n_degraded = int(round(mix * len(images)))
    chosen = set(rng.permutation(len(images))[:n_degraded].tolist())
    entries = []
    for idx, path in enumerate(images):
        img_seed = _image_seed(seed, idx)
        if idx in chosen:
            kind = kinds[idx % len(kinds)]
            spec = sample_spec(kind, rng, img_seed)
        else:
            spec = DegradationSpec("none", {}, img_seed)
        entries.append(ManifestEntry(src=str(path), dst=str(dst_dir / path.name), spec=spec))
    return DatasetManifest(entries)


def materialize(manifest: DatasetManifest) -> None:
    """Write every manifest entry's degraded image to its `dst` path."""
    from . import imageio

    for entry in manifest:
        Path(entry.dst).parent.mkdir(parents=True, exist_ok=True)
        imageio.write_image(entry.dst, apply_spec(imageio.read_image(entry.src),
                                                  entry.spec))
