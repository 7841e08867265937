"""HTTP service that serves image chips around interesting points to labelers.

The label CSV is the single source of truth: in-memory assignment state is
a cache rebuilt from it on startup, so a crash or restart loses nothing
but the outstanding (served, not yet labeled) chips, which simply return
to the pool. A chip retires once three distinct labelers have annotated
it. All state mutations and CSV appends happen under one lock, and rows
are flushed to disk before the request is acknowledged.
"""

from __future__ import annotations

import csv
import io
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import HTMLResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .raster import RasterScene, Window, read_window

CSV_COLUMNS = [
    "chip_id",
    "labeler_id",
    "class",
    "species",
    "confidence",
    "comment",
    "lon",
    "lat",
    "scene_id",
    "served_at_iso8601",
    "labeled_at_iso8601",
    "duration_s",
]

DEFAULT_CLASSES = [
    "whale",
    "ship",
    "debris",
    "oil",
    "whitecap",
    "zooplankton",
    "bird",
    "buoy",
    "aquaculture",
    "rock",
    "wave",
    "glint",
    "cloud",
    "land",
    "other",
    "unsure",
]

CONFIDENCE_LEVELS = ("possible", "probable", "definite")
RETIREMENT_COUNT = 3
DEFAULT_STALE_AFTER_S = 30 * 60
CHIP_SIZE_M = 100.0


class ServiceError(Exception):
    """Service-level failure with an HTTP-ish status code."""

    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass(frozen=True)
class Chip:
    chip_id: str
    x: float
    y: float
    window: Window
    scene_id: str
    resolution_m: float
    acquisition_date: str | None


def build_chips(points, scene: RasterScene, chip_size_m: float = CHIP_SIZE_M) -> dict[str, Chip]:
    """One chip per point: a square window of chip_size_m per side centered
    on the point, clamped (trimmed) to the scene bounds."""
    side = max(1, round(chip_size_m / scene.resolution))
    chips = {}
    for p in points:
        row, col = scene.geo_to_pixel(p.x, p.y)
        r0 = int(round(row)) - side // 2
        c0 = int(round(col)) - side // 2
        window = Window(c0, r0, side, side).clamped(scene.height, scene.width)
        chips[p.id] = Chip(
            chip_id=p.id,
            x=p.x,
            y=p.y,
            window=window,
            scene_id=p.scene_id or scene.scene_id,
            resolution_m=scene.resolution,
            acquisition_date=scene.acquisition_date,
        )
    return chips


def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


class LabelService:
    """Assignment, persistence, and rendering for one pool of chips."""

    def __init__(
        self,
        scene: RasterScene,
        chips: dict[str, Chip],
        labels_path,
        classes=None,
        rgb_indices=None,
        stale_after_s: float = DEFAULT_STALE_AFTER_S,
        stretch=(2.0, 98.0),
        clock=_utc_now,
    ):
        self.scene = scene
        self.chips = dict(chips)
        self.labels_path = Path(labels_path)
        self.classes = list(classes) if classes else list(DEFAULT_CLASSES)
        if "whale" not in self.classes:
            raise ValueError("the class list must include 'whale' (confidence flow depends on it)")
        self.rgb_indices = rgb_indices
        self.stale_after_s = stale_after_s
        self.stretch = stretch
        self._now = clock
        self._lock = threading.Lock()

        self.labels_by_chip: dict[str, set[str]] = {cid: set() for cid in self.chips}
        self.records: list[dict] = []
        # labeler -> (chip_id, served_at datetime); not persisted by design
        self.outstanding: dict[str, tuple[str, datetime]] = {}

        self._replay_csv()
        self._csv_file = open(self.labels_path, "a", newline="")
        self._csv_writer = csv.writer(self._csv_file)
        if self.labels_path.stat().st_size == 0:
            self._csv_writer.writerow(CSV_COLUMNS)
            self._flush()

    def close(self) -> None:
        self._csv_file.close()

    def _replay_csv(self) -> None:
        if not self.labels_path.exists():
            self.labels_path.touch()
            return
        with open(self.labels_path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None:
                return
            if list(reader.fieldnames) != CSV_COLUMNS:
                raise ValueError(
                    f"{self.labels_path}: unexpected label CSV columns {reader.fieldnames}; expected {CSV_COLUMNS}"
                )
            for row in reader:
                self.records.append(dict(row))
                self.labels_by_chip.setdefault(row["chip_id"], set()).add(row["labeler_id"])

    def _flush(self) -> None:
        self._csv_file.flush()
        os.fsync(self._csv_file.fileno())

    def is_retired(self, chip_id: str) -> bool:
        return len(self.labels_by_chip.get(chip_id, ())) >= RETIREMENT_COUNT

    def state_snapshot(self) -> dict:
        """Persistent state only (what a restart reconstructs)."""
        return {
            "labels": {cid: sorted(labelers) for cid, labelers in self.labels_by_chip.items() if labelers},
            "retired": sorted(cid for cid in self.labels_by_chip if self.is_retired(cid)),
        }

    # -- assignment ----------------------------------------------------

    def next_chip(self, labeler_id: str) -> dict | None:
        if not labeler_id or not labeler_id.strip():
            raise ServiceError(400, "labeler id must be a non-empty string")
        labeler_id = labeler_id.strip()
        with self._lock:
            now = self._now()
            held = self.outstanding.get(labeler_id)
            if held is not None:
                chip_id, served_at = held
                age = (now - served_at).total_seconds()
                if age <= self.stale_after_s and not self.is_retired(chip_id) and labeler_id not in self.labels_by_chip.get(chip_id, ()):
                    self.outstanding[labeler_id] = (chip_id, now)
                    return self._chip_payload(chip_id)
                del self.outstanding[labeler_id]

            candidates = [
                cid
                for cid in self.chips
                if not self.is_retired(cid) and labeler_id not in self.labels_by_chip.get(cid, ())
            ]
            if not candidates:
                return None
            # fewest remaining labels first, then id, so chips finish uniformly
            candidates.sort(key=lambda cid: (RETIREMENT_COUNT - len(self.labels_by_chip.get(cid, ())), cid))
            chip_id = candidates[0]
            self.outstanding[labeler_id] = (chip_id, now)
            return self._chip_payload(chip_id)

    def _chip_payload(self, chip_id: str) -> dict:
        chip = self.chips[chip_id]
        return {
            "chip_id": chip.chip_id,
            "lon": chip.x,
            "lat": chip.y,
            "date": chip.acquisition_date,
            "scene_id": chip.scene_id,
            "resolution_m": chip.resolution_m,
            "image_url": f"/api/chip/{chip.chip_id}.png",
        }

    # -- labeling --------------------------------------------------------

    def submit_label(
        self,
        chip_id: str,
        labeler_id: str,
        class_name: str,
        species: str | None = None,
        confidence: str | None = None,
        comment: str | None = None,
    ) -> dict:
        if not labeler_id or not labeler_id.strip():
            raise ServiceError(400, "labeler id must be a non-empty string")
        labeler_id = labeler_id.strip()
        with self._lock:
            if chip_id not in self.chips:
                raise ServiceError(404, f"unknown chip {chip_id!r}")
            if class_name not in self.classes:
                raise ServiceError(400, f"class {class_name!r} is not in the configured class list")
            if class_name == "whale":
                if confidence not in CONFIDENCE_LEVELS:
                    raise ServiceError(
                        400, f"whale labels need a confidence in {CONFIDENCE_LEVELS}, got {confidence!r}"
                    )
            else:
                if confidence:
                    raise ServiceError(400, f"confidence only applies to whale labels, not {class_name!r}")
                if species:
                    raise ServiceError(400, f"species only applies to whale labels, not {class_name!r}")
            if labeler_id in self.labels_by_chip.get(chip_id, ()):
                raise ServiceError(409, f"labeler {labeler_id!r} already labeled chip {chip_id!r}")
            if self.is_retired(chip_id):
                self.outstanding.pop(labeler_id, None)
                raise ServiceError(409, f"chip {chip_id!r} is already retired")
            held = self.outstanding.get(labeler_id)
            if held is None or held[0] != chip_id:
                raise ServiceError(409, f"chip {chip_id!r} is not outstanding for labeler {labeler_id!r}")

            served_at = held[1]
            labeled_at = self._now()
            duration_s = max(0.0, (labeled_at - served_at).total_seconds())
            chip = self.chips[chip_id]
            row = {
                "chip_id": chip_id,
                "labeler_id": labeler_id,
                "class": class_name,
                "species": species or "",
                "confidence": confidence or "",
                "comment": comment or "",
                "lon": repr(chip.x),
                "lat": repr(chip.y),
                "scene_id": chip.scene_id,
                "served_at_iso8601": served_at.isoformat(),
                "labeled_at_iso8601": labeled_at.isoformat(),
                "duration_s": f"{duration_s:.3f}",
            }
            self._csv_writer.writerow([row[c] for c in CSV_COLUMNS])
            self._flush()
            self.records.append(row)
            self.labels_by_chip.setdefault(chip_id, set()).add(labeler_id)
            del self.outstanding[labeler_id]
            return {"ok": True, "retired": self.is_retired(chip_id)}

    # -- rendering -------------------------------------------------------

    def render_png(self, chip_id: str) -> bytes:
        if chip_id not in self.chips:
            raise ServiceError(404, f"unknown chip {chip_id!r}")
        chip = self.chips[chip_id]
        block, valid = read_window(self.scene, chip.window)
        if self.rgb_indices is not None:
            idx = list(self.rgb_indices)
        elif self.scene.rgb_indices:
            idx = list(self.scene.rgb_indices)
        else:
            idx = list(range(min(3, self.scene.channels)))
        block = block[idx]
        if not valid.any():
            raise ServiceError(409, f"chip {chip_id!r} window contains no valid pixels")

        vals = block[:, valid]
        lo = float(np.percentile(vals, self.stretch[0]))
        hi = float(np.percentile(vals, self.stretch[1]))
        if hi <= lo:
            scaled = np.full(block.shape, 128, dtype=np.uint8)
        else:
            scaled = np.clip((block - lo) / (hi - lo) * 255.0, 0, 255).astype(np.uint8)
        scaled[:, ~valid] = 0

        from PIL import Image

        if scaled.shape[0] >= 3:
            img = Image.fromarray(np.moveaxis(scaled[:3], 0, 2), mode="RGB")
        else:
            img = Image.fromarray(scaled[0], mode="L")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()

    # -- progress ----------------------------------------------------------

    def progress(self) -> dict:
        with self._lock:
            per_class: dict[str, int] = {}
            durations: dict[str, list[float]] = {}
            for row in self.records:
                cls = row["class"]
                per_class[cls] = per_class.get(cls, 0) + 1
                try:
                    durations.setdefault(cls, []).append(float(row["duration_s"]))
                except (TypeError, ValueError):
                    pass
            return {
                "total": len(self.chips),
                "retired": sum(1 for cid in self.chips if self.is_retired(cid)),
                "labels": len(self.records),
                "per_class": per_class,
                "mean_duration_s": {
                    cls: (sum(vals) / len(vals)) for cls, vals in durations.items() if vals
                },
            }


_FALLBACK_PAGE = """<!doctype html>
<html><head><title>seaspot labeler</title></head>
<body><h1>seaspot chip service</h1>
<p>No frontend bundle is configured. The JSON API is live:</p>
<ul>
<li><code>GET /api/next?labeler=&lt;id&gt;</code></li>
<li><code>POST /api/label</code></li>
<li><code>GET /api/chip/&lt;chip_id&gt;.png</code></li>
<li><code>GET /api/progress</code></li>
</ul></body></html>
"""


def create_app(service: LabelService, static_dir=None):
    """Build the FastAPI app around a LabelService."""
    app = FastAPI(title="seaspot chip service")
    app.state.service = service

    def _wrap(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ServiceError as exc:
            raise HTTPException(status_code=exc.status, detail=exc.message)

    @app.get("/api/next")
    def api_next(labeler: str = Query(default="")):
        payload = _wrap(service.next_chip, labeler)
        if payload is None:
            return {"done": True}
        return payload

    @app.post("/api/label")
    async def api_label(request: Request):
        body = await request.json()
        result = _wrap(
            service.submit_label,
            chip_id=str(body.get("chip_id", "")),
            labeler_id=str(body.get("labeler", "")),
            class_name=str(body.get("class", "")),
            species=body.get("species"),
            confidence=body.get("confidence"),
            comment=body.get("comment"),
        )
        return result

    @app.get("/api/chip/{chip_id}.png")
    def api_chip(chip_id: str):
        png = _wrap(service.render_png, chip_id)
        return Response(content=png, media_type="image/png")

    @app.get("/api/progress")
    def api_progress():
        return JSONResponse(service.progress())

    @app.get("/api/classes")
    def api_classes():
        return {"classes": service.classes, "confidence_levels": list(CONFIDENCE_LEVELS)}

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="frontend")
    else:

        @app.get("/", response_class=HTMLResponse)
        def index():
            return _FALLBACK_PAGE

    return app
