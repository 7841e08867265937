"""Rasterize land/water vector polygons onto a scene's pixel grid.

A pixel is land iff its center lies inside a land polygon under the
even-odd rule (holes subtract); the water mask is the complement. The fill
is a scanline crossing-parity sweep per pixel row, evaluated per polygon
so overlapping land polygons union rather than cancel. Rasterization is a
pure function of the window, so any tile decomposition yields the same
mask.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from shapely.geometry import Polygon as ShapelyPolygon

from .raster import RasterScene, Window


class LandMaskError(ValueError):
    """Raised for malformed polygon inputs."""


@dataclass
class PolygonSet:
    """Validated polygons in the scene's CRS; role says what they cover."""

    polygons: list  # each polygon: list of rings; each ring: (N, 2) float64 array (closed)
    role: str = "land"  # "land" or "water"
    crs: str | None = None
    buffer_m: float = field(default=0.0)

    def __post_init__(self):
        if self.role not in ("land", "water"):
            raise LandMaskError(f"polygon role must be 'land' or 'water', got {self.role!r}")

    def is_empty(self) -> bool:
        return not self.polygons


def load_polygons(path, role: str = "land") -> PolygonSet:
    """Load a GeoJSON Polygon/MultiPolygon (Feature)Collection.

    Rings must be closed (first vertex equals last) and exterior rings must
    be non-self-intersecting; invalid geometry is rejected.
    """
    path = Path(path)
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise LandMaskError(f"{path}: unreadable GeoJSON ({exc})") from exc

    crs = None
    if isinstance(doc.get("crs"), dict):
        crs = doc["crs"].get("properties", {}).get("name")

    polygons = []
    for geom in _iter_geometries(doc, path):
        gtype = geom.get("type")
        if gtype == "Polygon":
            polygons.append(_validate_polygon(geom["coordinates"], path))
        elif gtype == "MultiPolygon":
            for coords in geom["coordinates"]:
                polygons.append(_validate_polygon(coords, path))
        else:
            raise LandMaskError(f"{path}: unsupported geometry type {gtype!r} (polygons only)")
    return PolygonSet(polygons=polygons, role=role, crs=crs)


def _iter_geometries(doc, path):
    dtype = doc.get("type")
    if dtype == "FeatureCollection":
        for feat in doc.get("features", []):
            if feat.get("geometry"):
                yield feat["geometry"]
    elif dtype == "Feature":
        if doc.get("geometry"):
            yield doc["geometry"]
    elif dtype in ("Polygon", "MultiPolygon"):
        yield doc
    elif dtype == "GeometryCollection":
        yield from doc.get("geometries", [])
    else:
        raise LandMaskError(f"{path}: not a GeoJSON polygon document (type={dtype!r})")


def _validate_polygon(coordinates, path) -> list:
    if not coordinates:
        raise LandMaskError(f"{path}: polygon with no rings")
    rings = []
    for i, ring in enumerate(coordinates):
        arr = np.asarray(ring, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] < 2 or arr.shape[0] < 4:
            raise LandMaskError(f"{path}: malformed ring (need >= 4 [x, y] vertices)")
        arr = arr[:, :2]
        if not np.array_equal(arr[0], arr[-1]):
            raise LandMaskError(f"{path}: unclosed ring (first vertex must equal last)")
        if i == 0:
            # self-intersection check on the exterior only; shapely's
            # validity test is the robust way to do this
            if not ShapelyPolygon(arr).is_valid:
                raise LandMaskError(f"{path}: self-intersecting exterior ring rejected")
        rings.append(arr)
    return rings


def buffer_polygons(polys: PolygonSet, buffer_m: float) -> PolygonSet:
    """Dilate polygons outward by a distance in CRS units (meters).

    Used to push the land mask over surf/intertidal zones that trigger
    false anomalies.
    """
    if buffer_m == 0:
        return polys
    if buffer_m < 0:
        raise LandMaskError(f"buffer must be >= 0 m, got {buffer_m}")
    from shapely.ops import unary_union

    shapes = [ShapelyPolygon(rings[0], [r for r in rings[1:]]) for rings in polys.polygons]
    merged = unary_union([s.buffer(buffer_m) for s in shapes])
    geoms = list(merged.geoms) if merged.geom_type == "MultiPolygon" else [merged]
    out = []
    for g in geoms:
        rings = [np.asarray(g.exterior.coords, dtype=np.float64)]
        rings.extend(np.asarray(interior.coords, dtype=np.float64) for interior in g.interiors)
        out.append(rings)
    return PolygonSet(polygons=out, role=polys.role, crs=polys.crs, buffer_m=buffer_m)


def rasterize_water_mask(polys: PolygonSet | None, scene: RasterScene, window: Window) -> np.ndarray:
    """Boolean mask (True = water) for the window's pixel centers.

    With no polygons everything is water. Polygons with role "land" mark
    covered pixels as land; role "water" marks covered pixels as water and
    everything else as land.
    """
    shape = (window.height, window.width)
    if polys is None or polys.is_empty():
        return np.ones(shape, dtype=bool) if polys is None or polys.role == "land" else np.zeros(shape, dtype=bool)
    if polys.crs and scene.crs and polys.crs != scene.crs:
        raise LandMaskError(f"polygon CRS {polys.crs} does not match scene CRS {scene.crs}")

    covered = np.zeros(shape, dtype=bool)
    rows = np.arange(window.row_off, window.row_end)
    cols = np.arange(window.col_off, window.col_end)
    x0, sx, _, y0, _, sy = scene.geotransform
    xs = x0 + (cols + 0.5) * sx
    ys = y0 + (rows + 0.5) * sy
    for rings in polys.polygons:
        covered |= _fill_even_odd(rings, xs, ys)
    return ~covered if polys.role == "land" else covered


def _fill_even_odd(rings, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Even-odd scanline fill of one polygon (exterior + holes) onto a grid.

    A pixel center is inside iff a ray to +x crosses the polygon's edges an
    odd number of times. Edges are half-open in y ([min, max)) so vertices
    are counted once.
    """
    starts = []
    stops = []
    for ring in rings:
        starts.append(ring[:-1])
        stops.append(ring[1:])
    p0 = np.concatenate(starts, axis=0)
    p1 = np.concatenate(stops, axis=0)

    inside = np.zeros((ys.size, xs.size), dtype=bool)
    y_min = np.minimum(p0[:, 1], p1[:, 1])
    y_max = np.maximum(p0[:, 1], p1[:, 1])
    for i, y in enumerate(ys):
        hits = (y >= y_min) & (y < y_max)
        if not hits.any():
            continue
        a = p0[hits]
        b = p1[hits]
        t = (y - a[:, 1]) / (b[:, 1] - a[:, 1])
        x_cross = a[:, 0] + t * (b[:, 0] - a[:, 0])
        x_cross.sort()
        # parity of crossings strictly to the left of the pixel center
        parity = np.searchsorted(x_cross, xs, side="left") % 2
        inside[i] = parity == 1
    return inside
