"""End-to-end detection: scene -> deviations -> anomaly map -> points.

The scene is processed in tiles through a worker pool. Tile results are
written into a scratch float32 anomaly map on disk (NaN marks land/nodata
pixels), over which the exact quantile threshold, binarization, and tiled
region extraction run. All cross-tile reductions are applied in a fixed
tile order, so a run is deterministic regardless of scheduling.
"""

from __future__ import annotations

import json
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import landmask as landmask_mod
from . import regions as regions_mod
from . import raster
from .quantile import nearest_rank_quantile
from .standardize import chunked_deviations, rolling_deviations
from .validation import resolve_channel_subset

DEFAULT_TILE_SIZE = 2048
DEFAULT_DENSITY_CUTOFF = 2.0  # points per km^2; above this the scene is suspect
DEFAULT_SHIFT_STRIDE = 32


class PipelineError(ValueError):
    pass


@dataclass
class PipelineConfig:
    method: str = "rolling"  # "rolling" or "chunked"
    kernel_size: int = 51
    chunk_size: int = 1024
    epsilon: float = 1e-8
    channel_subset: object = None  # None, "rgb", or list of indices
    threshold: regions_mod.ThresholdConfig = field(default_factory=regions_mod.ThresholdConfig)
    land_mask_path: str | None = None
    land_buffer_m: float = 0.0
    tile_size: int = DEFAULT_TILE_SIZE
    workers: int | None = None
    density_cutoff_per_km2: float = DEFAULT_DENSITY_CUTOFF
    shift_stride: int = DEFAULT_SHIFT_STRIDE
    sweep_quantiles: list = field(default_factory=list)
    debug_anomaly_path: str | None = None
    debug_mask_path: str | None = None
    debug_deviations_dir: str | None = None

    def __post_init__(self):
        if self.method not in ("rolling", "chunked"):
            raise PipelineError(f"method must be 'rolling' or 'chunked', got {self.method!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        doc = dict(doc)
        thr = doc.pop("threshold", None)
        cfg = cls(**doc)
        if thr is not None:
            cfg.threshold = regions_mod.ThresholdConfig(**thr)
        return cfg


def load_config(path) -> PipelineConfig:
    with open(path) as f:
        return PipelineConfig.from_dict(json.load(f))


def global_channel_means(scene: raster.RasterScene, stride: int = DEFAULT_SHIFT_STRIDE) -> np.ndarray:
    """Per-channel mean over a strided subsample of valid pixels, float32.

    The value shifts data before convolution; it only needs to sit near the
    data's magnitude, so a strided subsample is enough and keeps the pass
    cheap on large scenes. Deterministic for a given scene and stride.
    """
    sums = np.zeros(scene.channels, dtype=np.float64)
    count = 0
    for r in range(0, scene.height, stride):
        block, valid = raster.read_window(scene, raster.Window(0, r, scene.width, 1))
        sub = block[:, 0, ::stride]
        vsub = valid[0, ::stride]
        if vsub.any():
            sums += sub[:, vsub].sum(axis=1, dtype=np.float64)
            count += int(vsub.sum())
    if count == 0:
        return np.zeros(scene.channels, dtype=np.float32)
    return (sums / count).astype(np.float32)


def run_pipeline(
    scene_path,
    cfg: PipelineConfig,
    out_geojson=None,
    out_csv=None,
    summary_path=None,
) -> dict:
    """Run detection on a scene; returns (summary dict, points list).

    The summary carries n_points, analyzed_water_km2, points_per_km2,
    threshold_value_used, quantile, runtime_seconds, and a nonzero
    "advisory" field when the point density exceeds the configured cutoff
    (whitecap-contaminated scenes). Exit behavior is the caller's concern;
    an advisory is not an error.
    """
    t_start = time.monotonic()
    scene = raster.open_scene(scene_path)
    if scene.is_geographic:
        raise PipelineError(
            f"{scene_path}: scene CRS {scene.crs or '(unknown)'} uses degrees; "
            "areas and matching radii need a projected metric CRS"
        )

    polys = None
    if cfg.land_mask_path:
        polys = landmask_mod.load_polygons(cfg.land_mask_path)
        if cfg.land_buffer_m:
            polys = landmask_mod.buffer_polygons(polys, cfg.land_buffer_m)

    subset = resolve_channel_subset(cfg.channel_subset, scene.channels, scene.rgb_indices)

    if cfg.method == "rolling":
        halo = cfg.kernel_size // 2
        align = 1
        shift = global_channel_means(scene, cfg.shift_stride)[subset]
    else:
        halo = 0
        align = cfg.chunk_size
        shift = None

    tiles = list(raster.iter_tiles(scene, cfg.tile_size, align=align))

    scratch_dir = tempfile.TemporaryDirectory(prefix="seaspot-")
    anomaly_path = Path(scratch_dir.name) / "anomaly.f32"
    anomaly = np.memmap(anomaly_path, dtype=np.float32, mode="w+", shape=(scene.height, scene.width))

    dev_maps = None
    if cfg.debug_deviations_dir:
        dev_dir = Path(cfg.debug_deviations_dir)
        dev_dir.mkdir(parents=True, exist_ok=True)
        dev_maps = [
            np.memmap(
                Path(scratch_dir.name) / f"dev{ci}.f32",
                dtype=np.float32,
                mode="w+",
                shape=(scene.height, scene.width),
            )
            for ci in subset
        ]

    def process_tile(window: raster.Window) -> int:
        block, valid = raster.read_window(scene, window, halo=halo)
        water = landmask_mod.rasterize_water_mask(polys, scene, window)
        if cfg.method == "rolling":
            dev = rolling_deviations(
                block[subset], cfg.kernel_size, cfg.epsilon, shift=shift, valid=valid
            )
            if halo:
                dev = dev[:, halo:-halo, halo:-halo]
                valid = valid[halo:-halo, halo:-halo]
        else:
            dev = chunked_deviations(block[subset], cfg.chunk_size, cfg.epsilon, valid=valid)
        tile_map = regions_mod.aggregate_abs_deviation(dev)
        keep = valid & water
        tile_map[~keep] = np.nan
        anomaly[window.row_off : window.row_end, window.col_off : window.col_end] = tile_map
        if dev_maps is not None:
            for i in range(len(subset)):
                dev_maps[i][window.row_off : window.row_end, window.col_off : window.col_end] = dev[i]
        return int(keep.sum())

    workers = cfg.workers or None
    with ThreadPoolExecutor(max_workers=workers) as pool:
        water_counts = list(pool.map(process_tile, tiles))
    water_px = sum(water_counts)
    anomaly.flush()

    if water_px == 0:
        scratch_dir.cleanup()
        raise PipelineError("empty water area: every pixel is masked out or nodata")

    def anomaly_chunks():
        step = max(1, (1 << 22) // max(1, scene.width))
        for r0 in range(0, scene.height, step):
            yield np.asarray(anomaly[r0 : min(r0 + step, scene.height)])

    if cfg.threshold.mode == "quantile":
        threshold_value = nearest_rank_quantile(anomaly_chunks, cfg.threshold.value)
        quantile = cfg.threshold.value
    else:
        threshold_value = float(cfg.threshold.value)
        quantile = None

    def extract_points_at(threshold):
        def tile_mask(window: raster.Window) -> np.ndarray:
            tile = np.asarray(anomaly[window.row_off : window.row_end, window.col_off : window.col_end])
            return regions_mod.binarize(tile, threshold)

        region_list = regions_mod.connected_components_tiled(
            tile_mask, scene.height, scene.width, cfg.tile_size
        )
        return tile_mask, regions_mod.filter_and_extract_points(
            region_list, scene.resolution, anomaly, cfg.threshold, scene
        )

    tile_mask, points = extract_points_at(threshold_value)

    water_km2 = water_px * scene.resolution**2 / 1e6
    density = regions_mod.points_per_km2(points, water_km2)
    advisory = 1 if density > cfg.density_cutoff_per_km2 else 0

    # optional quantile sweep over the already-built anomaly map: cheap way
    # to pick an operating threshold by watching the point density
    sweep = []
    for q in cfg.sweep_quantiles:
        thr_q = nearest_rank_quantile(anomaly_chunks, q)
        _, points_q = extract_points_at(thr_q)
        if out_geojson:
            sweep_path = Path(str(out_geojson)).with_suffix(f".q{q}.geojson")
            regions_mod.write_points_geojson(sweep_path, points_q, crs=scene.crs)
        sweep.append(
            {
                "quantile": q,
                "threshold_value": thr_q,
                "n_points": len(points_q),
                "points_per_km2": regions_mod.points_per_km2(points_q, water_km2),
            }
        )

    if dev_maps is not None:
        for i, ci in enumerate(subset):
            raster.write_scene(
                Path(cfg.debug_deviations_dir) / f"deviations_ch{ci}.tif",
                np.asarray(dev_maps[i]).copy(),
                geotransform=scene.geotransform,
                crs=scene.crs,
            )
        del dev_maps

    if cfg.debug_anomaly_path:
        dump = np.asarray(anomaly).copy()
        raster.write_scene(
            cfg.debug_anomaly_path, dump, geotransform=scene.geotransform, crs=scene.crs, nodata=None
        )
    if cfg.debug_mask_path:
        mask_dump = np.zeros((scene.height, scene.width), dtype=np.uint8)
        for w in tiles:
            mask_dump[w.row_off : w.row_end, w.col_off : w.col_end] = tile_mask(w).astype(np.uint8)
        raster.write_scene(
            cfg.debug_mask_path, mask_dump, geotransform=scene.geotransform, crs=scene.crs, nodata=None
        )

    if out_geojson:
        regions_mod.write_points_geojson(out_geojson, points, crs=scene.crs)
    if out_csv:
        regions_mod.write_points_csv(out_csv, points)

    summary = {
        "scene_id": scene.scene_id,
        "n_points": len(points),
        "analyzed_water_km2": water_km2,
        "points_per_km2": density,
        "threshold_value_used": threshold_value,
        "quantile": quantile,
        "min_area_m2": cfg.threshold.min_area_m2,
        "buffered_50m_km2": regions_mod.buffered_points_area_km2(points, 50.0),
        "advisory": advisory,
        "advisory_message": (
            f"point density {density:.2f}/km^2 exceeds {cfg.density_cutoff_per_km2}/km^2; "
            "scene is likely whitecap-contaminated"
        )
        if advisory
        else "",
        "runtime_seconds": time.monotonic() - t_start,
    }
    if sweep:
        summary["sweep"] = sweep
    if summary_path:
        with open(summary_path, "w") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")

    del anomaly
    scratch_dir.cleanup()
    return summary, points
