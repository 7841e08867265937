"""Minimal GeoTIFF reader/writer with windowed access.

Supports the subset of TIFF 6.0 this package needs: classic (non-Big) TIFF,
uncompressed strip-organized files, uint8/uint16/float32 samples, chunky or
planar layout, and the GeoTIFF georeferencing tags (pixel scale + tiepoint,
geokey directory, GDAL nodata). Windowed reads touch only the strips that
intersect the requested rows, so opening a large scene never loads the full
pixel array.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# TIFF tag ids
_IMAGE_WIDTH = 256
_IMAGE_LENGTH = 257
_BITS_PER_SAMPLE = 258
_COMPRESSION = 259
_PHOTOMETRIC = 262
_STRIP_OFFSETS = 273
_SAMPLES_PER_PIXEL = 277
_ROWS_PER_STRIP = 278
_STRIP_BYTE_COUNTS = 279
_PLANAR_CONFIG = 284
_DATETIME = 306
_EXTRA_SAMPLES = 338
_SAMPLE_FORMAT = 339
_TILE_WIDTH = 322
_MODEL_PIXEL_SCALE = 33550
_MODEL_TIEPOINT = 33922
_GEO_KEY_DIRECTORY = 34735
_GDAL_NODATA = 42113

# GeoKey ids
_GT_MODEL_TYPE = 1024
_GT_RASTER_TYPE = 1025
_GEOGRAPHIC_TYPE = 2048
_PROJECTED_CS_TYPE = 3072

_TYPE_SIZES = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 11: 4, 12: 8}
_TYPE_FMT = {3: "H", 4: "I", 11: "f", 12: "d"}


class GeoTiffError(ValueError):
    """Raised for malformed or unsupported GeoTIFF files."""


@dataclass
class TiffInfo:
    width: int
    height: int
    samples: int
    dtype: np.dtype
    planar: int
    rows_per_strip: int
    strip_offsets: list
    strip_byte_counts: list
    geotransform: tuple | None
    crs: str | None
    is_geographic: bool
    nodata: float | None
    datetime: str | None = None


def _read_ifd_entries(f, order: str):
    f.seek(4)
    (ifd_off,) = struct.unpack(order + "I", f.read(4))
    f.seek(ifd_off)
    (n_entries,) = struct.unpack(order + "H", f.read(2))
    entries = {}
    for _ in range(n_entries):
        tag, typ, count = struct.unpack(order + "HHI", f.read(8))
        raw = f.read(4)
        entries[tag] = (typ, count, raw)
    return entries


def _entry_values(f, order: str, typ: int, count: int, raw: bytes):
    size = _TYPE_SIZES.get(typ)
    if size is None:
        raise GeoTiffError(f"unsupported TIFF field type {typ}")
    total = size * count
    if total <= 4:
        data = raw[:total]
    else:
        (off,) = struct.unpack(order + "I", raw)
        pos = f.tell()
        f.seek(off)
        data = f.read(total)
        f.seek(pos)
    if typ == 2:  # ASCII
        return data.rstrip(b"\x00").decode("ascii", errors="replace")
    if typ == 1:  # BYTE
        return list(data)
    if typ == 5:  # RATIONAL
        vals = struct.unpack(order + "I" * (2 * count), data)
        return [vals[2 * i] / vals[2 * i + 1] for i in range(count)]
    fmt = _TYPE_FMT[typ]
    return list(struct.unpack(order + fmt * count, data))


def read_info(path) -> TiffInfo:
    """Parse the first IFD of a TIFF file without reading pixel data."""
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(4)
        if len(head) < 4:
            raise GeoTiffError(f"{path}: not a TIFF file")
        if head[:2] == b"II":
            order = "<"
        elif head[:2] == b"MM":
            order = ">"
        else:
            raise GeoTiffError(f"{path}: not a TIFF file (bad byte order mark)")
        (magic,) = struct.unpack(order + "H", head[2:4])
        if magic == 43:
            raise GeoTiffError(f"{path}: BigTIFF is not supported; use the raw+sidecar format for very large scenes")
        if magic != 42:
            raise GeoTiffError(f"{path}: not a TIFF file (magic={magic})")

        entries = _read_ifd_entries(f, order)

        def get(tag, default=None):
            if tag not in entries:
                return default
            typ, count, raw = entries[tag]
            return _entry_values(f, order, typ, count, raw)

        if _TILE_WIDTH in entries:
            raise GeoTiffError(f"{path}: tiled TIFF layout is not supported (strip-organized only)")

        width = int(get(_IMAGE_WIDTH, [0])[0])
        height = int(get(_IMAGE_LENGTH, [0])[0])
        samples = int(get(_SAMPLES_PER_PIXEL, [1])[0])
        compression = int(get(_COMPRESSION, [1])[0])
        if compression != 1:
            raise GeoTiffError(f"{path}: compressed TIFF (compression={compression}) is not supported")
        bits = get(_BITS_PER_SAMPLE, [8])
        if len(set(bits)) != 1:
            raise GeoTiffError(f"{path}: mixed bits-per-sample {bits} not supported")
        bits = int(bits[0])
        fmt = get(_SAMPLE_FORMAT, [1])
        fmt = int(fmt[0])
        if fmt == 1 and bits == 8:
            dtype = np.dtype(order + "u1")
        elif fmt == 1 and bits == 16:
            dtype = np.dtype(order + "u2")
        elif fmt == 3 and bits == 32:
            dtype = np.dtype(order + "f4")
        else:
            raise GeoTiffError(f"{path}: unsupported sample type (bits={bits}, format={fmt})")
        planar = int(get(_PLANAR_CONFIG, [1])[0])
        if planar not in (1, 2):
            raise GeoTiffError(f"{path}: bad planar configuration {planar}")

        offsets = get(_STRIP_OFFSETS)
        counts = get(_STRIP_BYTE_COUNTS)
        if offsets is None or counts is None:
            raise GeoTiffError(f"{path}: missing strip layout tags")
        rows_per_strip = int(get(_ROWS_PER_STRIP, [height])[0])

        geotransform = None
        scale = get(_MODEL_PIXEL_SCALE)
        tiepoint = get(_MODEL_TIEPOINT)
        if scale is not None and tiepoint is not None and len(tiepoint) >= 6:
            # tiepoint maps raster (i, j, k) -> model (x, y, z); scale gives px size
            i, j, _, x, y, _ = tiepoint[:6]
            sx, sy = float(scale[0]), float(scale[1])
            x0 = x - i * sx
            y0 = y + j * sy
            geotransform = (x0, sx, 0.0, y0, 0.0, -sy)

        crs = None
        is_geographic = False
        geokeys = get(_GEO_KEY_DIRECTORY)
        if geokeys is not None and len(geokeys) >= 4:
            n_keys = int(geokeys[3])
            for k in range(n_keys):
                key_id, loc, cnt, val = geokeys[4 + 4 * k : 8 + 4 * k]
                if key_id == _GT_MODEL_TYPE and loc == 0:
                    is_geographic = int(val) == 2
                elif key_id == _PROJECTED_CS_TYPE and loc == 0:
                    crs = f"EPSG:{int(val)}"
                elif key_id == _GEOGRAPHIC_TYPE and loc == 0 and crs is None:
                    crs = f"EPSG:{int(val)}"

        nodata = None
        nd = get(_GDAL_NODATA)
        if nd is not None:
            try:
                nodata = float(str(nd).strip())
            except ValueError:
                nodata = None

        dt = get(_DATETIME)
        datetime_str = str(dt).strip() if dt else None

        return TiffInfo(
            width=width,
            height=height,
            samples=samples,
            dtype=dtype,
            planar=planar,
            rows_per_strip=rows_per_strip,
            strip_offsets=[int(v) for v in offsets],
            strip_byte_counts=[int(v) for v in counts],
            geotransform=geotransform,
            crs=crs,
            is_geographic=is_geographic,
            nodata=nodata,
            datetime=datetime_str,
        )


def read_rows(path, info: TiffInfo, row0: int, row1: int) -> np.ndarray:
    """Read rows [row0, row1) of all samples as a (C, rows, W) array.

    Only the strips overlapping the row range are read from disk.
    """
    if not 0 <= row0 < row1 <= info.height:
        raise GeoTiffError(f"row range [{row0}, {row1}) outside image height {info.height}")
    rps = info.rows_per_strip
    strips_per_plane = (info.height + rps - 1) // rps
    itemsize = info.dtype.itemsize
    n_rows = row1 - row0
    out = np.empty((info.samples, n_rows, info.width), dtype=info.dtype)

    s0, s1 = row0 // rps, (row1 - 1) // rps
    with open(path, "rb") as f:
        for strip in range(s0, s1 + 1):
            strip_r0 = strip * rps
            strip_r1 = min(strip_r0 + rps, info.height)
            # overlap with the requested range, in strip-local coordinates
            a = max(row0, strip_r0) - strip_r0
            b = min(row1, strip_r1) - strip_r0
            dst0 = max(row0, strip_r0) - row0
            if info.planar == 2:
                for c in range(info.samples):
                    idx = c * strips_per_plane + strip
                    f.seek(info.strip_offsets[idx] + a * info.width * itemsize)
                    buf = f.read((b - a) * info.width * itemsize)
                    arr = np.frombuffer(buf, dtype=info.dtype).reshape(b - a, info.width)
                    out[c, dst0 : dst0 + (b - a)] = arr
            else:
                f.seek(info.strip_offsets[strip] + a * info.width * info.samples * itemsize)
                buf = f.read((b - a) * info.width * info.samples * itemsize)
                arr = np.frombuffer(buf, dtype=info.dtype).reshape(b - a, info.width, info.samples)
                out[:, dst0 : dst0 + (b - a)] = np.moveaxis(arr, 2, 0)
    return out


def _pack_entries(entries):
    """Lay out IFD entries, returning (ifd_bytes, overflow_bytes, data_start)."""
    # entries: list of (tag, type, values) with values already numeric/bytes
    order = "<"
    n = len(entries)
    ifd_size = 2 + n * 12 + 4
    header_size = 8
    overflow_off = header_size + ifd_size
    body = b""
    packed = []
    for tag, typ, values in sorted(entries, key=lambda e: e[0]):
        if typ == 2:
            data = values if isinstance(values, bytes) else values.encode("ascii")
            if not data.endswith(b"\x00"):
                data += b"\x00"
            count = len(data)
        else:
            fmt = _TYPE_FMT[typ]
            count = len(values)
            data = struct.pack(order + fmt * count, *values)
        if len(data) <= 4:
            raw = data.ljust(4, b"\x00")
        else:
            if len(data) % 2:
                data += b"\x00"
            raw = struct.pack(order + "I", overflow_off + len(body))
            body += data
        packed.append(struct.pack(order + "HHI", tag, typ, count) + raw)
    ifd = struct.pack(order + "H", n) + b"".join(packed) + struct.pack(order + "I", 0)
    return ifd, body, overflow_off + len(body)


def write(
    path,
    array: np.ndarray,
    *,
    geotransform=None,
    crs: str | None = None,
    is_geographic: bool = False,
    nodata: float | None = None,
    rows_per_strip: int | None = None,
    datetime_str: str | None = None,
) -> None:
    """Write a (C, H, W) or (H, W) array as an uncompressed planar GeoTIFF.

    geotransform is the 6-tuple (x0, sx, 0, y0, 0, sy) with sy < 0 for
    north-up images. crs is an "EPSG:nnnn" string.
    """
    array = np.asarray(array)
    if array.ndim == 2:
        array = array[np.newaxis]
    if array.ndim != 3:
        raise GeoTiffError(f"array must be 2D or 3D, got shape {array.shape}")
    c, h, w = array.shape
    dtype = np.dtype(array.dtype)
    if dtype == np.uint8:
        bits, fmt = 8, 1
    elif dtype == np.uint16:
        bits, fmt = 16, 1
    elif dtype == np.float32:
        bits, fmt = 32, 3
    else:
        raise GeoTiffError(f"unsupported dtype {dtype} (use uint8, uint16 or float32)")
    array = array.astype(dtype.newbyteorder("<"), copy=False)

    if rows_per_strip is None:
        row_bytes = w * dtype.itemsize
        rows_per_strip = min(h, max(1, (1 << 20) // max(1, row_bytes)))
    strips_per_plane = (h + rows_per_strip - 1) // rows_per_strip

    entries = [
        (_IMAGE_WIDTH, 4, [w]),
        (_IMAGE_LENGTH, 4, [h]),
        (_BITS_PER_SAMPLE, 3, [bits] * c),
        (_COMPRESSION, 3, [1]),
        (_PHOTOMETRIC, 3, [1]),
        (_SAMPLES_PER_PIXEL, 3, [c]),
        (_ROWS_PER_STRIP, 3, [rows_per_strip]),
        (_PLANAR_CONFIG, 3, [2]),
        (_SAMPLE_FORMAT, 3, [fmt] * c),
    ]
    if c > 1:
        entries.append((_EXTRA_SAMPLES, 3, [0] * (c - 1)))
    if geotransform is not None:
        x0, sx, shear_x, y0, shear_y, sy = [float(v) for v in geotransform]
        if shear_x != 0.0 or shear_y != 0.0:
            raise GeoTiffError("rotated geotransforms are not supported")
        entries.append((_MODEL_PIXEL_SCALE, 12, [sx, -sy, 0.0]))
        entries.append((_MODEL_TIEPOINT, 12, [0.0, 0.0, 0.0, x0, y0, 0.0]))
    if crs is not None or geotransform is not None:
        model_type = 2 if is_geographic else 1
        keys = [(_GT_MODEL_TYPE, 0, 1, model_type), (_GT_RASTER_TYPE, 0, 1, 1)]
        epsg = _epsg_code(crs)
        if epsg is not None:
            keys.append((_GEOGRAPHIC_TYPE if is_geographic else _PROJECTED_CS_TYPE, 0, 1, epsg))
        flat = [1, 1, 0, len(keys)]
        for k in keys:
            flat.extend(k)
        entries.append((_GEO_KEY_DIRECTORY, 3, flat))
    if nodata is not None:
        entries.append((_GDAL_NODATA, 2, repr(float(nodata))))
    if datetime_str is not None:
        entries.append((_DATETIME, 2, datetime_str))

    # strip layout: placeholder offsets first, then rewrite once data_start known
    n_strips = c * strips_per_plane
    byte_counts = []
    for c_i in range(c):
        for s in range(strips_per_plane):
            r0 = s * rows_per_strip
            r1 = min(r0 + rows_per_strip, h)
            byte_counts.append((r1 - r0) * w * dtype.itemsize)
    entries.append((_STRIP_BYTE_COUNTS, 4, byte_counts))
    entries.append((_STRIP_OFFSETS, 4, [0] * n_strips))
    ifd, body, data_start = _pack_entries(entries)

    offsets = []
    pos = data_start
    for bc in byte_counts:
        offsets.append(pos)
        pos += bc
    if pos > 0xFFFFFFFF:
        raise GeoTiffError("image too large for classic TIFF (>4 GiB); use the raw+sidecar format")
    for i, e in enumerate(entries):
        if e[0] == _STRIP_OFFSETS:
            entries[i] = (_STRIP_OFFSETS, 4, offsets)
    ifd, body, data_start2 = _pack_entries(entries)
    assert data_start2 == data_start

    path = Path(path)
    with open(path, "wb") as f:
        f.write(b"II" + struct.pack("<H", 42) + struct.pack("<I", 8))
        f.write(ifd)
        f.write(body)
        for c_i in range(c):
            plane = np.ascontiguousarray(array[c_i])
            f.write(plane.tobytes())


def _epsg_code(crs: str | None) -> int | None:
    if crs is None:
        return None
    crs = crs.strip().upper()
    if crs.startswith("EPSG:"):
        try:
            return int(crs.split(":", 1)[1])
        except ValueError:
            return None
    return None


# Raw float32 + JSON sidecar fallback (used in tests and for >4 GiB scenes).

def write_raw(path, array: np.ndarray, *, geotransform, crs=None, is_geographic=False, nodata=None) -> None:
    """Write a channel-major float32 binary with a .json sidecar next to it."""
    array = np.asarray(array, dtype=np.float32)
    if array.ndim == 2:
        array = array[np.newaxis]
    c, h, w = array.shape
    path = Path(path)
    with open(path, "wb") as f:
        f.write(np.ascontiguousarray(array).tobytes())
    sidecar = {
        "channels": c,
        "height": h,
        "width": w,
        "geotransform": list(geotransform) if geotransform is not None else None,
        "crs": crs,
        "is_geographic": bool(is_geographic),
        "nodata": nodata,
    }
    with open(path.with_suffix(path.suffix + ".json"), "w") as f:
        json.dump(sidecar, f, indent=2)
        f.write("\n")
