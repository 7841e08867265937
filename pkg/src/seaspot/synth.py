"""Synthetic ocean scenes with injected bright targets.

Desk-scale stand-in for commercial imagery: Gaussian ocean noise per
channel, Gaussian-profile bright blobs at known centers (the truth set),
and optional whitecap-like speckle that is *not* part of the truth set.
Everything is driven by a JSON-able spec dict and a seed, so generated
scenes are byte-reproducible.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import raster


class SynthError(ValueError):
    pass


@dataclass
class BlobSpec:
    row: float
    col: float
    amplitude_sigma: float = 10.0  # brightness in units of ocean sigma
    sigma_px: float = 2.0  # Gaussian profile radius
    plateau_px: float = 0.0  # optional flat core radius at full amplitude


@dataclass
class SceneSpec:
    height: int = 1000
    width: int = 1000
    channels: int = 3
    resolution_m: float = 0.3
    ocean_mean: float = 500.0
    ocean_sigma: float = 20.0
    blobs: list = field(default_factory=list)
    whitecaps_per_km2: float = 0.0
    whitecap_amplitude_sigma: float = 8.0
    whitecap_sigma_px: float = 1.5
    whitecap_plateau_px: float = 1.5
    origin: tuple = (500000.0, 4640000.0)
    crs: str = "EPSG:32619"
    scene_id: str = "synthetic"

    @classmethod
    def from_dict(cls, doc: dict) -> "SceneSpec":
        doc = dict(doc)
        blobs = [BlobSpec(**b) for b in doc.pop("blobs", [])]
        unknown = set(doc) - (set(cls.__dataclass_fields__) - {"blobs"})
        if unknown:
            raise SynthError(f"unknown scene spec fields: {sorted(unknown)}")
        if "origin" in doc:
            doc["origin"] = tuple(doc["origin"])
        return cls(**doc, blobs=blobs)


def load_scene_spec(path) -> SceneSpec:
    with open(path) as f:
        return SceneSpec.from_dict(json.load(f))


def generate_synthetic_scene(spec: SceneSpec, out_path, truth_path=None, seed: int = 0):
    """Write the scene raster and (optionally) the truth CSV of blob centers.

    Returns the opened scene. Raises if any blob center falls outside the
    scene.
    """
    if spec.height < 1 or spec.width < 1 or spec.channels < 1:
        raise SynthError(f"scene must have positive dims, got {spec.channels}x{spec.height}x{spec.width}")
    for blob in spec.blobs:
        if not (0 <= blob.row < spec.height and 0 <= blob.col < spec.width):
            raise SynthError(f"blob at ({blob.row}, {blob.col}) lies outside the {spec.height}x{spec.width} scene")

    rng = np.random.default_rng(seed)
    block = rng.normal(spec.ocean_mean, spec.ocean_sigma, size=(spec.channels, spec.height, spec.width))
    block = block.astype(np.float32)

    for blob in spec.blobs:
        _inject(block, blob, spec.ocean_sigma)

    n_whitecaps = 0
    if spec.whitecaps_per_km2 > 0:
        area_km2 = spec.height * spec.width * spec.resolution_m**2 / 1e6
        n_whitecaps = max(1, round(spec.whitecaps_per_km2 * area_km2))
        margin = 5
        for _ in range(n_whitecaps):
            r = rng.uniform(margin, spec.height - margin)
            c = rng.uniform(margin, spec.width - margin)
            _inject(
                block,
                BlobSpec(
                    row=r,
                    col=c,
                    amplitude_sigma=spec.whitecap_amplitude_sigma,
                    sigma_px=spec.whitecap_sigma_px,
                    plateau_px=spec.whitecap_plateau_px,
                ),
                spec.ocean_sigma,
            )

    x0, y0 = spec.origin
    res = spec.resolution_m
    geotransform = (x0, res, 0.0, y0, 0.0, -res)
    raster.write_scene(out_path, block, geotransform=geotransform, crs=spec.crs)

    if truth_path is not None:
        with open(truth_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["id", "lon", "lat", "confidence", "species"])
            for i, blob in enumerate(spec.blobs):
                x = float(x0 + (blob.col + 0.5) * res)
                y = float(y0 - (blob.row + 0.5) * res)
                writer.writerow([f"blob-{i:04d}", repr(x), repr(y), "definite", ""])

    scene = raster.open_scene(Path(out_path), scene_id=spec.scene_id)
    return scene, n_whitecaps


def _inject(block: np.ndarray, blob: BlobSpec, ocean_sigma: float) -> None:
    """Add a bright blob: flat plateau core with a Gaussian skirt."""
    _, h, w = block.shape
    reach = int(np.ceil(blob.plateau_px + 4 * blob.sigma_px)) + 1
    r0, r1 = max(0, int(blob.row) - reach), min(h, int(blob.row) + reach + 1)
    c0, c1 = max(0, int(blob.col) - reach), min(w, int(blob.col) + reach + 1)
    rr, cc = np.meshgrid(np.arange(r0, r1), np.arange(c0, c1), indexing="ij")
    dist = np.sqrt((rr - blob.row) ** 2 + (cc - blob.col) ** 2)
    skirt = np.maximum(dist - blob.plateau_px, 0.0)
    profile = np.exp(-0.5 * (skirt / max(blob.sigma_px, 1e-6)) ** 2)
    bump = (blob.amplitude_sigma * ocean_sigma * profile).astype(np.float32)
    block[:, r0:r1, c0:c1] += bump[np.newaxis]


def blob_pixel_count(blob: BlobSpec, threshold_fraction: float = 0.5) -> int:
    """Pixels where the blob profile exceeds a fraction of full amplitude.

    Handy for sizing blobs against the region-area floor.
    """
    radius = blob.plateau_px + blob.sigma_px * np.sqrt(-2.0 * np.log(threshold_fraction))
    reach = int(np.ceil(radius)) + 2
    rr, cc = np.meshgrid(np.arange(-reach, reach + 1), np.arange(-reach, reach + 1), indexing="ij")
    dist = np.sqrt((rr + (blob.row % 1.0)) ** 2 + (cc + (blob.col % 1.0)) ** 2)
    skirt = np.maximum(dist - blob.plateau_px, 0.0)
    profile = np.exp(-0.5 * (skirt / max(blob.sigma_px, 1e-6)) ** 2)
    return int((profile >= threshold_fraction).sum())
