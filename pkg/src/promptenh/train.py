"""Toy restoration training and prompt-discriminability measurement.

Training minimizes the mean absolute error between the enhanced
degraded image and its clean source with momentum SGD. The
discriminability report embeds probe images as the spatially averaged
prompt-block output at a decoder level and scores how well the
embeddings cluster by degradation kind (mean silhouette, Euclidean).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import degrade, imageio, ops
from .config import EnhancerConfig, TrainConfig
from .degrade import DatasetManifest
from .network import Enhancer
from .params import ParamStore
from .tensor import ConfigError, NumericsError, Tensor, strict_mode

__all__ = [
    "TrainingDiverged",
    "SgdState",
    "sgd_step",
    "train_toy",
    "DiscriminabilityReport",
    "measure_discriminability",
    "probe_embeddings",
    "generate_toy_images",
]


class TrainingDiverged(NumericsError):
    """The loss became non-finite."""


class SgdState:
    """Momentum buffers, one per registered parameter."""

    def __init__(self, store: ParamStore):
        self.velocity = {name: np.zeros_like(t.data) for name, t in store.items()}


def sgd_step(store: ParamStore, state: SgdState, cfg: TrainConfig) -> None:
    """v <- m*v + g + wd*theta; theta <- theta - lr*v."""
    for name, t in store.items():
        if t.grad is None:
            raise ConfigError(f"parameter {name!r} has no gradient; run backward first")
        v = state.velocity[name]
        v *= cfg.momentum
        v += t.grad + cfg.weight_decay * t.data
        t.data = t.data - cfg.lr * v
    store.zero_grad()


def _load_pairs(manifest: DatasetManifest, dtype) -> tuple[np.ndarray, np.ndarray]:
    clean, degraded = [], []
    for e in manifest:
        clean.append(imageio.read_image(e.src).transpose(2, 0, 1))
        degraded.append(imageio.read_image(e.dst).transpose(2, 0, 1))
    return (np.stack(degraded).astype(dtype), np.stack(clean).astype(dtype))


def train_toy(manifest: DatasetManifest, cfg: TrainConfig, ecfg: EnhancerConfig,
              model: Enhancer | None = None,
              log=None) -> tuple[Enhancer, list[tuple[int, float]]]:
    """Train an enhancer on (degraded, clean) pairs from a manifest.

    Returns the trained model and the loss curve [(iteration, loss)].
    Fully deterministic under (cfg.seed, ecfg, manifest).
    """
    cfg.validate()
    model = model or Enhancer(ecfg, seed=cfg.seed)
    degraded, clean = _load_pairs(manifest, model.dtype)
    rng = np.random.default_rng(cfg.seed)
    state = SgdState(model.store)
    curve: list[tuple[int, float]] = []
    with strict_mode(False):
        for it in range(cfg.iters):
            idx = rng.integers(0, degraded.shape[0], size=cfg.batch)
            h, w = degraded.shape[2], degraded.shape[3]
            pad_h, pad_w = (-h) % 8, (-w) % 8
            x = Tensor(degraded[idx])
            target = Tensor(clean[idx])
            if pad_h or pad_w:
                x = ops.pad2d(x, 0, pad_h, 0, pad_w)
                target = ops.pad2d(target, 0, pad_h, 0, pad_w)
            # optimize the pre-clamp reconstruction: an upper bound on the
            # clamped error whose gradient never vanishes at the clamp rails
            correction, _ = model.forward_features(x)
            loss = (x + correction - target).abs().mean()
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at iteration {it}")
            model.store.zero_grad()
            loss.backward()
            sgd_step(model.store, state, cfg)
            curve.append((it, value))
            if log is not None:
                log(it, value)
    return model, curve


def restoration_loss(model: Enhancer, manifest: DatasetManifest) -> float:
    """Mean absolute error of the model over every pair in the manifest."""
    degraded, clean = _load_pairs(manifest, model.dtype)
    with strict_mode(False):
        out, _ = model.enhance(Tensor(degraded))
    return float(np.abs(out.data - clean).mean())


# -- discriminability -----------------------------------------------------------

@dataclass
class DiscriminabilityReport:
    level: int
    silhouette: float
    sample_count: int
    degenerate: bool = False
    centroids: dict[str, list[float]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"level": self.level, "silhouette": self.silhouette,
                "sample_count": self.sample_count, "degenerate": self.degenerate,
                "centroids": self.centroids}


def probe_embeddings(model: Enhancer, probes: list[tuple[np.ndarray, str]],
                     level: int) -> tuple[np.ndarray, list[str]]:
    """Embed probe images as the spatial mean of the level's block output."""
    vecs, labels = [], []
    with strict_mode(False):
        for pixels, kind in probes:
            x = Tensor(pixels.transpose(2, 0, 1)[None].astype(model.dtype))
            _, feats = model.enhance(x)
            vecs.append(feats[level].data.mean(axis=(0, 2, 3)))
            labels.append(kind)
    return np.stack(vecs), labels


def measure_discriminability(model: Enhancer, probes: list[tuple[np.ndarray, str]],
                             level: int) -> DiscriminabilityReport:
    """Silhouette score of per-kind clusters of level embeddings."""
    kinds = sorted({kind for _, kind in probes})
    if len(kinds) < 2:
        raise ConfigError("discriminability needs at least 2 degradation kinds")
    counts = {k: sum(1 for _, kind in probes if kind == k) for k in kinds}
    if min(counts.values()) < 2:
        raise ConfigError("discriminability needs >= 2 samples per kind")
    vecs, labels = probe_embeddings(model, probes, level)
    centroids = {k: vecs[[i for i, l in enumerate(labels) if l == k]].mean(axis=0).tolist()
                 for k in kinds}
    spread = np.ptp(vecs, axis=0).max()
    if spread < 1e-12:
        # all probes embed identically; silhouette is 0 by convention
        return DiscriminabilityReport(level=level, silhouette=0.0,
                                      sample_count=len(labels), degenerate=True,
                                      centroids=centroids)
    from sklearn.metrics import silhouette_score

    score = float(silhouette_score(vecs, labels, metric="euclidean"))
    return DiscriminabilityReport(level=level, silhouette=score,
                                  sample_count=len(labels), centroids=centroids)


# -- toy data -----------------------------------------------------------------------

def generate_toy_images(count: int, size: int, seed: int = 0) -> list[np.ndarray]:
    """Smooth random RGB images: low-frequency gradients plus soft blobs."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    images = []
    for _ in range(count):
        img = np.empty((size, size, 3))
        for ch in range(3):
            a, b, c = rng.uniform(-1, 1, size=3)
            img[..., ch] = 0.5 + 0.25 * (a * xs + b * ys + c * xs * ys)
        for _ in range(rng.integers(2, 5)):
            cy, cx = rng.uniform(0.2, 0.8, size=2) * size
            radius = rng.uniform(0.08, 0.25) * size
            blob = np.exp(-(((ys * (size - 1) - cy) ** 2 + (xs * (size - 1) - cx) ** 2)
                            / (2 * radius ** 2)))
            img += rng.uniform(-0.35, 0.35, size=3) * blob[..., None]
        images.append(np.clip(img, 0.0, 1.0))
    return images


def build_probe_set(model_seed: int, kinds, images_per_kind: int = 8,
                    size: int = 32, seed: int = 7) -> list[tuple[np.ndarray, str]]:
    """Degrade a shared clean pool once per kind, for discriminability probes."""
    clean = generate_toy_images(images_per_kind, size, seed=seed)
    rng = np.random.default_rng(seed + model_seed)
    probes = []
    for kind in kinds:
        for i, img in enumerate(clean):
            spec = degrade.sample_spec(kind, rng, seed=seed * 1000 + i)
            probes.append((degrade.apply_spec(img, spec), kind))
    return probes
