"""Georeferenced scene access: windowed reads, halos, pixel/geo transforms.

A scene is opened lazily; pixel data is only touched by windowed reads, so
multi-gigapixel strips can be processed tile by tile. Two on-disk formats
are supported: strip-organized GeoTIFF and a raw float32 binary with a JSON
sidecar (``scene.bin`` + ``scene.bin.json``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geotiff

GEOGRAPHIC_EPSG = {4326, 4269, 4267, 4258, 4283}


class RasterError(ValueError):
    """Raised for unreadable or unsupported scene inputs."""


@dataclass(frozen=True)
class Window:
    """A rectangular pixel region; always interpreted in (col, row) offsets."""

    col_off: int
    row_off: int
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"window must have positive extent, got {self}")

    @property
    def row_end(self) -> int:
        return self.row_off + self.height

    @property
    def col_end(self) -> int:
        return self.col_off + self.width

    def clamped(self, height: int, width: int) -> "Window":
        r0 = max(0, self.row_off)
        c0 = max(0, self.col_off)
        r1 = min(height, self.row_end)
        c1 = min(width, self.col_end)
        if r1 <= r0 or c1 <= c0:
            raise ValueError(f"window {self} does not intersect a {height}x{width} scene")
        return Window(c0, r0, c1 - c0, r1 - r0)


@dataclass
class RasterScene:
    """Handle to a georeferenced multi-channel raster.

    Read-only after open; windowed reads may run concurrently from several
    workers against the same handle.
    """

    path: Path
    channels: int
    height: int
    width: int
    geotransform: tuple  # (x0, sx, 0, y0, 0, sy), sy < 0 for north-up
    crs: str | None
    is_geographic: bool
    nodata: float | None
    scene_id: str
    acquisition_date: str | None = None
    rgb_indices: list | None = None
    _backend: str = field(default="geotiff", repr=False)
    _tiff_info: object = field(default=None, repr=False)

    @property
    def resolution(self) -> float:
        """Ground size of one pixel along either axis (geotransform units)."""
        return abs(self.geotransform[1])

    def pixel_to_geo(self, row: float, col: float) -> tuple[float, float]:
        """Map a (possibly fractional) pixel index to the coordinate of its center."""
        x0, sx, _, y0, _, sy = self.geotransform
        return (x0 + (col + 0.5) * sx, y0 + (row + 0.5) * sy)

    def geo_to_pixel(self, x: float, y: float) -> tuple[float, float]:
        """Inverse of pixel_to_geo; returns fractional (row, col)."""
        x0, sx, _, y0, _, sy = self.geotransform
        return ((y - y0) / sy - 0.5, (x - x0) / sx - 0.5)

    def full_window(self) -> Window:
        return Window(0, 0, self.width, self.height)

    def _read_rows(self, row0: int, row1: int) -> np.ndarray:
        if self._backend == "geotiff":
            return geotiff.read_rows(self.path, self._tiff_info, row0, row1)
        # raw: channel-major float32, C-order
        n = row1 - row0
        out = np.empty((self.channels, n, self.width), dtype=np.float32)
        itemsize = 4
        with open(self.path, "rb") as f:
            for c in range(self.channels):
                off = ((c * self.height + row0) * self.width) * itemsize
                f.seek(off)
                buf = f.read(n * self.width * itemsize)
                if len(buf) != n * self.width * itemsize:
                    raise RasterError(f"{self.path}: truncated raw raster")
                out[c] = np.frombuffer(buf, dtype="<f4").reshape(n, self.width)
        return out


def open_scene(path, *, scene_id: str | None = None) -> RasterScene:
    """Open a GeoTIFF or raw+sidecar raster without reading pixel data.

    Scenes without a geotransform are rejected: every downstream output
    (areas, point coordinates, chip windows) needs georeferencing.
    """
    path = Path(path)
    if not path.exists():
        raise RasterError(f"{path}: no such file")
    if scene_id is None:
        scene_id = path.stem

    sidecar = path.with_suffix(path.suffix + ".json")
    if sidecar.exists():
        return _open_raw(path, sidecar, scene_id)

    try:
        info = geotiff.read_info(path)
    except geotiff.GeoTiffError as exc:
        raise RasterError(str(exc)) from exc
    if info.geotransform is None:
        raise RasterError(f"{path}: missing georeferencing (no geotransform tags)")
    _check_geotransform(info.geotransform, path)
    return RasterScene(
        path=path,
        channels=info.samples,
        height=info.height,
        width=info.width,
        geotransform=info.geotransform,
        crs=info.crs,
        is_geographic=info.is_geographic,
        nodata=info.nodata,
        scene_id=scene_id,
        acquisition_date=info.datetime,
        _backend="geotiff",
        _tiff_info=info,
    )


def _open_raw(path: Path, sidecar: Path, scene_id: str) -> RasterScene:
    try:
        with open(sidecar) as f:
            meta = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise RasterError(f"{sidecar}: unreadable sidecar ({exc})") from exc
    for key in ("channels", "height", "width"):
        if key not in meta:
            raise RasterError(f"{sidecar}: sidecar missing required field {key!r}")
    gt = meta.get("geotransform")
    if gt is None:
        raise RasterError(f"{path}: missing georeferencing (sidecar geotransform is null)")
    gt = tuple(float(v) for v in gt)
    _check_geotransform(gt, path)
    crs = meta.get("crs")
    is_geographic = bool(meta.get("is_geographic", False))
    epsg = geotiff._epsg_code(crs) if crs else None
    if epsg in GEOGRAPHIC_EPSG:
        is_geographic = True
    return RasterScene(
        path=path,
        channels=int(meta["channels"]),
        height=int(meta["height"]),
        width=int(meta["width"]),
        geotransform=gt,
        crs=crs,
        is_geographic=is_geographic,
        nodata=meta.get("nodata"),
        scene_id=meta.get("scene_id", scene_id),
        acquisition_date=meta.get("acquisition_date"),
        rgb_indices=meta.get("rgb_indices"),
        _backend="raw",
    )


def _check_geotransform(gt, path) -> None:
    x0, sx, rx, y0, ry, sy = gt
    if rx != 0.0 or ry != 0.0:
        raise RasterError(f"{path}: rotated geotransforms are not supported")
    if sx == 0.0 or sy == 0.0:
        raise RasterError(f"{path}: degenerate geotransform (zero pixel size)")
    if abs(abs(sx) - abs(sy)) > 1e-6 * max(abs(sx), abs(sy)):
        raise RasterError(f"{path}: non-square pixels ({sx} x {sy}) are not supported")


def read_window(scene: RasterScene, window: Window, halo: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Read a window plus a replicate-padded halo.

    Returns ``(block, valid)`` where block has shape
    ``(C, window.height + 2*halo, window.width + 2*halo)`` in float32 and
    valid is a boolean mask of the same spatial shape. Halo samples outside
    the scene replicate the nearest edge pixel (clamping row and column
    independently, matching convolutional replicate padding). A pixel is
    invalid when any channel equals the nodata value or is non-finite.
    """
    if halo < 0:
        raise ValueError(f"halo must be >= 0, got {halo}")
    w = window
    if w.row_off < 0 or w.col_off < 0 or w.row_end > scene.height or w.col_end > scene.width:
        raise ValueError(f"window {window} exceeds scene bounds {scene.height}x{scene.width}")

    r0 = max(0, w.row_off - halo)
    r1 = min(scene.height, w.row_end + halo)
    block = scene._read_rows(r0, r1).astype(np.float32, copy=False)

    c0 = max(0, w.col_off - halo)
    c1 = min(scene.width, w.col_end + halo)
    block = block[:, :, c0:c1]

    pad_top = r0 - (w.row_off - halo)
    pad_bottom = (w.row_end + halo) - r1
    pad_left = c0 - (w.col_off - halo)
    pad_right = (w.col_end + halo) - c1
    if pad_top or pad_bottom or pad_left or pad_right:
        block = np.pad(block, ((0, 0), (pad_top, pad_bottom), (pad_left, pad_right)), mode="edge")

    valid = np.isfinite(block).all(axis=0)
    if scene.nodata is not None:
        valid &= ~(block == np.float32(scene.nodata)).any(axis=0)
    return np.ascontiguousarray(block), valid


def iter_tiles(scene: RasterScene, tile_size: int, *, align: int = 1):
    """Yield windows covering the scene in row-major order.

    Tile extents are multiples of ``align`` except at the right/bottom
    edges (chunked standardization needs tile borders on chunk borders).
    """
    if align > 1:
        tile_size = max(align, (tile_size // align) * align)
    for r0 in range(0, scene.height, tile_size):
        h = min(tile_size, scene.height - r0)
        for c0 in range(0, scene.width, tile_size):
            w = min(tile_size, scene.width - c0)
            yield Window(c0, r0, w, h)


def write_scene(
    path,
    array: np.ndarray,
    *,
    geotransform,
    crs: str | None = None,
    is_geographic: bool = False,
    nodata: float | None = None,
) -> None:
    """Write an array as GeoTIFF (.tif/.tiff) or raw+sidecar (anything else)."""
    path = Path(path)
    if path.suffix.lower() in (".tif", ".tiff"):
        geotiff.write(
            path, array, geotransform=geotransform, crs=crs, is_geographic=is_geographic, nodata=nodata
        )
    else:
        geotiff.write_raw(
            path, array, geotransform=geotransform, crs=crs, is_geographic=is_geographic, nodata=nodata
        )
