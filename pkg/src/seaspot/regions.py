"""Turn standardized deviations into interesting points.

Channel deviations are aggregated into a scalar anomaly map (sum of
absolute deviations), thresholded into a binary mask, grouped into
8-connected regions, filtered by physical area, and reduced to centroid
points. Region extraction also works tile by tile: fragments touching a
tile border are merged across tiles with a union-find pass, producing the
identical region set to a single-pass extraction.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .raster import RasterScene, Window

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class Region:
    """An 8-connected set of mask pixels (row/col arrays in global coords)."""

    rows: np.ndarray
    cols: np.ndarray

    @property
    def size(self) -> int:
        return int(self.rows.size)

    @property
    def sort_key(self) -> tuple[int, int]:
        return (int(self.rows.min()), int(self.cols.min()))

    @property
    def centroid_px(self) -> tuple[float, float]:
        return (float(self.rows.mean(dtype=np.float64)), float(self.cols.mean(dtype=np.float64)))

    def pixel_set(self) -> set[tuple[int, int]]:
        return set(zip(self.rows.tolist(), self.cols.tolist()))


@dataclass(frozen=True)
class InterestingPoint:
    """Centroid of a surviving anomalous region, in scene coordinates."""

    id: str
    x: float
    y: float
    area_m2: float
    mean_anomaly: float
    scene_id: str


@dataclass
class ThresholdConfig:
    mode: str = "quantile"  # "quantile" or "fixed_value"
    value: float = 0.9999  # quantile q or fixed anomaly threshold
    min_area_m2: float = 1.5

    def __post_init__(self):
        if self.mode not in ("quantile", "fixed_value"):
            raise ValueError(f"threshold mode must be 'quantile' or 'fixed_value', got {self.mode!r}")
        if self.mode == "quantile" and not 0.0 < self.value < 1.0:
            raise ValueError(f"quantile must lie in (0, 1), got {self.value}")
        if self.min_area_m2 < 0:
            raise ValueError(f"min_area_m2 must be >= 0, got {self.min_area_m2}")


def aggregate_abs_deviation(deviations: np.ndarray, channel_subset=None) -> np.ndarray:
    """Sum of absolute deviations over the selected channels, float32.

    ``deviations`` is (C, H, W); NaNs (invalid pixels) propagate to NaN in
    the output so downstream stages can keep excluding them.
    """
    deviations = np.asarray(deviations, dtype=np.float32)
    if deviations.ndim == 2:
        deviations = deviations[np.newaxis]
    c = deviations.shape[0]
    if channel_subset is None:
        idx = list(range(c))
    else:
        idx = [int(i) for i in channel_subset]
        if not idx:
            raise ValueError("channel subset must not be empty")
        for i in idx:
            if not 0 <= i < c:
                raise ValueError(f"channel index {i} out of range for {c} channels")
    return np.abs(deviations[idx]).sum(axis=0, dtype=np.float32)


def binarize(anomaly: np.ndarray, threshold: float, valid=None, water=None) -> np.ndarray:
    """Anomalous-pixel mask: strictly above threshold, valid, and on water."""
    if not np.isfinite(threshold):
        raise ValueError(f"threshold must be finite, got {threshold}")
    anomaly = np.asarray(anomaly)
    with np.errstate(invalid="ignore"):
        mask = anomaly > np.float32(threshold)
    mask &= np.isfinite(anomaly)
    if valid is not None:
        mask &= np.asarray(valid, dtype=bool)
    if water is not None:
        mask &= np.asarray(water, dtype=bool)
    return mask


def connected_components(mask: np.ndarray) -> list[Region]:
    """8-connected components of a binary mask, ordered by (min row, min col)."""
    mask = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    if n == 0:
        return []
    regions = []
    objects = ndimage.find_objects(labels)
    for lab, sl in enumerate(objects, start=1):
        local = labels[sl] == lab
        rr, cc = np.nonzero(local)
        regions.append(
            Region(
                rows=(rr + sl[0].start).astype(np.int64),
                cols=(cc + sl[1].start).astype(np.int64),
            )
        )
    regions.sort(key=lambda r: r.sort_key)
    return regions


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:  # path compression
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def connected_components_tiled(get_mask, height: int, width: int, tile_size: int) -> list[Region]:
    """Region extraction over a tile grid, equal to the single-pass result.

    ``get_mask(window)`` must return the binary mask for that window. Each
    tile is labeled independently; fragments whose pixels touch a tile
    border are merged with a union-find over 8-adjacent border pixels of
    neighboring tiles.
    """
    frag_rows: list[np.ndarray] = []
    frag_cols: list[np.ndarray] = []
    border: dict[tuple[int, int], int] = {}

    for r0 in range(0, height, tile_size):
        h = min(tile_size, height - r0)
        for c0 in range(0, width, tile_size):
            w = min(tile_size, width - c0)
            mask = np.asarray(get_mask(Window(c0, r0, w, h)), dtype=bool)
            if mask.shape != (h, w):
                raise ValueError(f"get_mask returned shape {mask.shape}, expected {(h, w)}")
            labels, n = ndimage.label(mask, structure=_EIGHT_CONNECTED)
            if n == 0:
                continue
            base = len(frag_rows)
            objects = ndimage.find_objects(labels)
            for lab, sl in enumerate(objects, start=1):
                local = labels[sl] == lab
                rr, cc = np.nonzero(local)
                frag_rows.append((rr + sl[0].start + r0).astype(np.int64))
                frag_cols.append((cc + sl[1].start + c0).astype(np.int64))
            edge = np.zeros_like(mask)
            edge[0, :] = edge[-1, :] = True
            edge[:, 0] = edge[:, -1] = True
            err, ecc = np.nonzero(mask & edge)
            for rr_i, cc_i in zip(err.tolist(), ecc.tolist()):
                border[(rr_i + r0, cc_i + c0)] = base + int(labels[rr_i, cc_i]) - 1

    uf = _UnionFind(len(frag_rows))
    for (r, c), fi in border.items():
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                other = border.get((r + dr, c + dc))
                if other is not None:
                    uf.union(fi, other)

    merged_rows: dict[int, list[np.ndarray]] = {}
    merged_cols: dict[int, list[np.ndarray]] = {}
    for fi in range(len(frag_rows)):
        root = uf.find(fi)
        merged_rows.setdefault(root, []).append(frag_rows[fi])
        merged_cols.setdefault(root, []).append(frag_cols[fi])

    regions = [
        Region(rows=np.concatenate(merged_rows[root]), cols=np.concatenate(merged_cols[root]))
        for root in merged_rows
    ]
    regions.sort(key=lambda r: r.sort_key)
    return regions


def filter_and_extract_points(
    regions: list[Region],
    resolution: float,
    anomaly_map,
    threshold_cfg: ThresholdConfig,
    scene: RasterScene,
) -> list[InterestingPoint]:
    """Drop regions below the area floor and reduce the rest to points.

    ``anomaly_map`` must be indexable as map[rows, cols] (an array or
    memmap covering the whole scene).
    """
    if resolution <= 0:
        raise ValueError(f"resolution must be > 0, got {resolution}")
    px_area = resolution * resolution
    points = []
    index = 0
    for region in regions:
        area = region.size * px_area
        if area < threshold_cfg.min_area_m2:
            continue
        values = np.asarray(anomaly_map[region.rows, region.cols], dtype=np.float64)
        crow, ccol = region.centroid_px
        x, y = scene.pixel_to_geo(crow, ccol)
        points.append(
            InterestingPoint(
                id=f"{scene.scene_id}-{index:06d}",
                x=x,
                y=y,
                area_m2=area,
                mean_anomaly=float(values.mean()),
                scene_id=scene.scene_id,
            )
        )
        index += 1
    return points


def points_per_km2(points, water_area_km2: float) -> float:
    """Point density used for the whitecap-contamination advisory."""
    if water_area_km2 <= 0:
        raise ValueError(f"analyzed water area must be > 0 km^2, got {water_area_km2}")
    return len(points) / water_area_km2


def buffered_points_area_km2(points, radius_m: float = 50.0) -> float:
    """Area of the union of circular buffers around the points, in km^2.

    Overlapping buffers are unioned (counted once).
    """
    if not points:
        return 0.0
    from shapely.geometry import Point
    from shapely.ops import unary_union

    union = unary_union([Point(p.x, p.y).buffer(radius_m) for p in points])
    return union.area / 1e6


def write_points_geojson(path, points, crs: str | None = None) -> None:
    features = [
        {
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [p.x, p.y]},
            "properties": {
                "id": p.id,
                "area_m2": p.area_m2,
                "mean_anomaly": p.mean_anomaly,
                "scene_id": p.scene_id,
            },
        }
        for p in points
    ]
    collection = {"type": "FeatureCollection", "features": features}
    if crs:
        collection["crs"] = {"type": "name", "properties": {"name": crs}}
    with open(path, "w") as f:
        json.dump(collection, f, indent=2, sort_keys=True)
        f.write("\n")


def read_points_geojson(path) -> tuple[list[InterestingPoint], str | None]:
    with open(path) as f:
        collection = json.load(f)
    crs = None
    if isinstance(collection.get("crs"), dict):
        crs = collection["crs"].get("properties", {}).get("name")
    points = []
    for feat in collection.get("features", []):
        x, y = feat["geometry"]["coordinates"][:2]
        props = feat.get("properties", {})
        points.append(
            InterestingPoint(
                id=str(props.get("id", f"pt-{len(points):06d}")),
                x=float(x),
                y=float(y),
                area_m2=float(props.get("area_m2", 0.0)),
                mean_anomaly=float(props.get("mean_anomaly", 0.0)),
                scene_id=str(props.get("scene_id", "")),
            )
        )
    return points, crs


def write_points_csv(path, points) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "area_m2", "mean_anomaly", "scene_id", "lon", "lat"])
        for p in points:
            writer.writerow([p.id, repr(p.area_m2), repr(p.mean_anomaly), p.scene_id, repr(p.x), repr(p.y)])


__all__ = [
    "Region",
    "InterestingPoint",
    "ThresholdConfig",
    "aggregate_abs_deviation",
    "binarize",
    "connected_components",
    "connected_components_tiled",
    "filter_and_extract_points",
    "points_per_km2",
    "buffered_points_area_km2",
    "write_points_geojson",
    "read_points_geojson",
    "write_points_csv",
]
