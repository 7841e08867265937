"""Score interesting points against ground-truth target annotations.

A point is a true positive iff it lies within the matching radius (default
100 m) of at least one annotation; an annotation is detected iff at least
one point lies within the radius. The two notions are computed
independently so both "how many points were useful" and "how many targets
were found" are available regardless of multi-match ambiguity. Distances
are planar Euclidean in the projected CRS; degree-based inputs are
rejected rather than approximated.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CONFIDENCE_LEVELS = ("definite", "probable", "possible")


class EvaluateError(ValueError):
    pass


@dataclass(frozen=True)
class Annotation:
    x: float
    y: float
    confidence: str = "definite"
    species: str | None = None
    source: str = ""

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise EvaluateError(f"annotation coordinate must be finite, got ({self.x}, {self.y})")
        if self.confidence not in CONFIDENCE_LEVELS:
            raise EvaluateError(f"confidence must be one of {CONFIDENCE_LEVELS}, got {self.confidence!r}")


@dataclass
class EvalReport:
    scene: str
    n_annotations: int
    n_detected: int
    n_true_positive_points: int
    n_false_positive_points: int
    radius_m: float
    detected_by_confidence: dict = field(default_factory=dict)

    @property
    def recall(self) -> float:
        if self.n_annotations == 0:
            return 0.0
        return self.n_detected / self.n_annotations

    @property
    def n_points(self) -> int:
        return self.n_true_positive_points + self.n_false_positive_points


def match_points(points, annotations, radius_m: float = 100.0, *, scene: str = "", crs: str | None = None) -> EvalReport:
    """Match detected points to annotations within a metric radius."""
    if radius_m < 0:
        raise EvaluateError(f"radius must be >= 0 m, got {radius_m}")
    if crs is not None and _looks_geographic(crs):
        raise EvaluateError(
            f"points are in a geographic (degree) CRS {crs}; reproject to a metric CRS before evaluating"
        )
    pts = np.array([[p.x, p.y] for p in points], dtype=np.float64).reshape(-1, 2)
    anns = np.array([[a.x, a.y] for a in annotations], dtype=np.float64).reshape(-1, 2)

    if len(points) == 0 or len(annotations) == 0:
        tp = 0
        detected = np.zeros(len(annotations), dtype=bool)
    else:
        d2 = ((pts[:, None, :] - anns[None, :, :]) ** 2).sum(axis=2)
        within = d2 <= radius_m * radius_m
        tp = int(within.any(axis=1).sum())
        detected = within.any(axis=0)

    by_conf = {}
    for level in CONFIDENCE_LEVELS:
        idx = [i for i, a in enumerate(annotations) if a.confidence == level]
        if idx:
            by_conf[level] = {"annotated": len(idx), "detected": int(detected[idx].sum())}

    return EvalReport(
        scene=scene,
        n_annotations=len(annotations),
        n_detected=int(detected.sum()),
        n_true_positive_points=tp,
        n_false_positive_points=len(points) - tp,
        radius_m=radius_m,
        detected_by_confidence=by_conf,
    )


def _looks_geographic(crs: str) -> bool:
    from .raster import GEOGRAPHIC_EPSG
    from . import geotiff

    epsg = geotiff._epsg_code(crs)
    return epsg in GEOGRAPHIC_EPSG


def recall_table(reports) -> str:
    """Aligned text table: scene, annotated, TP, FP, recall (one decimal).

    The TP column counts detected annotations (so recall = TP / annotated,
    the arithmetic used for published per-scene results); FP counts
    unmatched points.
    """
    reports = list(reports)
    if not reports:
        raise EvaluateError("recall_table needs at least one report")
    rows = [("scene", "annotated", "tp", "fp", "recall")]
    for r in reports:
        rows.append(
            (
                r.scene or "-",
                str(r.n_annotations),
                str(r.n_detected),
                str(r.n_false_positive_points),
                f"{100.0 * r.recall:.1f}%",
            )
        )
    widths = [max(len(row[i]) for row in rows) for i in range(5)]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows]
    return "\n".join(lines)


def report_to_dict(report: EvalReport) -> dict:
    return {
        "scene": report.scene,
        "n_annotations": report.n_annotations,
        "n_detected": report.n_detected,
        "n_true_positive_points": report.n_true_positive_points,
        "n_false_positive_points": report.n_false_positive_points,
        "recall": report.recall,
        "radius_m": report.radius_m,
        "detected_by_confidence": report.detected_by_confidence,
    }


def load_annotations(path) -> list[Annotation]:
    """Load annotations from CSV (lon, lat, confidence, species) or GeoJSON points."""
    path = Path(path)
    if path.suffix.lower() in (".geojson", ".json"):
        return _load_annotations_geojson(path)
    return _load_annotations_csv(path)


def _load_annotations_csv(path) -> list[Annotation]:
    out = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise EvaluateError(f"{path}: empty annotations CSV")
        cols = {c.lower().strip(): c for c in reader.fieldnames}
        if "lon" not in cols or "lat" not in cols:
            raise EvaluateError(f"{path}: annotations CSV needs 'lon' and 'lat' columns, found {reader.fieldnames}")
        for row in reader:
            conf = (row.get(cols.get("confidence", ""), "") or "definite").strip().lower() or "definite"
            species = (row.get(cols.get("species", ""), "") or "").strip() or None
            out.append(
                Annotation(
                    x=float(row[cols["lon"]]),
                    y=float(row[cols["lat"]]),
                    confidence=conf,
                    species=species,
                    source=str(path),
                )
            )
    return out


def _load_annotations_geojson(path) -> list[Annotation]:
    with open(path) as f:
        doc = json.load(f)
    feats = doc.get("features", []) if doc.get("type") == "FeatureCollection" else [doc]
    out = []
    for feat in feats:
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Point":
            continue
        props = feat.get("properties") or {}
        conf = str(props.get("confidence", "definite")).strip().lower() or "definite"
        out.append(
            Annotation(
                x=float(geom["coordinates"][0]),
                y=float(geom["coordinates"][1]),
                confidence=conf,
                species=props.get("species"),
                source=str(path),
            )
        )
    return out
