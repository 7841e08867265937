"""Command-line interface: detect, evaluate, stability, synth, serve."""

from __future__ import annotations

import csv
import json
import sys

import click

from . import evaluate as evaluate_mod
from . import pipeline as pipeline_mod
from . import regions as regions_mod
from . import synth as synth_mod
from .standardize import stability_experiment


@click.group()
@click.version_option(package_name="seaspot")
def main():
    """Interesting-point detection in ocean satellite imagery."""


@main.command()
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True), help="Input raster (GeoTIFF or raw+sidecar).")
@click.option("--config", "config_path", type=click.Path(exists=True), help="Pipeline config JSON; flags override it.")
@click.option("--out", "out_geojson", required=True, type=click.Path(), help="Output points GeoJSON.")
@click.option("--out-csv", type=click.Path(), help="Also write points as CSV.")
@click.option("--summary", "summary_path", type=click.Path(), help="Write the run summary JSON here.")
@click.option("--land-mask", type=click.Path(exists=True), help="Land polygons GeoJSON (role: land).")
@click.option("--land-buffer-m", type=float, default=None, help="Dilate land outward by this many meters.")
@click.option("--method", type=click.Choice(["rolling", "chunked"]), default=None)
@click.option("--kernel", type=int, default=None, help="Rolling window side (odd). Default 51.")
@click.option("--chunk", type=int, default=None, help="Chunk side for the chunked method. Default 1024.")
@click.option("--quantile", type=float, default=None, help="Threshold quantile, e.g. 0.9999.")
@click.option("--threshold", "fixed_threshold", type=float, default=None, help="Fixed anomaly threshold (overrides quantile mode).")
@click.option("--min-area-m2", type=float, default=None, help="Region area floor in square meters. Default 1.5.")
@click.option("--channels", default=None, help="Channel subset: comma-separated indices or 'rgb'.")
@click.option("--tile-size", type=int, default=None, help="Processing tile side in pixels. Default 2048.")
@click.option("--workers", type=int, default=None, help="Worker threads (default: logical CPUs).")
@click.option("--density-cutoff", type=float, default=None, help="Advisory fires above this many points/km^2. Default 2.")
@click.option("--sweep-quantiles", default=None, help="Comma-separated extra quantiles to sweep (points written per quantile).")
@click.option("--debug-anomaly", type=click.Path(), help="Dump the anomaly map raster here.")
@click.option("--debug-mask", type=click.Path(), help="Dump the binary mask raster here.")
@click.option("--debug-deviations", type=click.Path(), help="Dump per-channel deviation rasters into this directory.")
def detect(
    scene_path,
    config_path,
    out_geojson,
    out_csv,
    summary_path,
    land_mask,
    land_buffer_m,
    method,
    kernel,
    chunk,
    quantile,
    fixed_threshold,
    min_area_m2,
    channels,
    tile_size,
    workers,
    density_cutoff,
    sweep_quantiles,
    debug_anomaly,
    debug_mask,
    debug_deviations,
):
    """Find interesting points in a scene and write them as GeoJSON."""
    cfg = pipeline_mod.load_config(config_path) if config_path else pipeline_mod.PipelineConfig()
    if method:
        cfg.method = method
    if kernel is not None:
        cfg.kernel_size = kernel
    if chunk is not None:
        cfg.chunk_size = chunk
    if land_mask:
        cfg.land_mask_path = land_mask
    if land_buffer_m is not None:
        cfg.land_buffer_m = land_buffer_m
    if fixed_threshold is not None:
        cfg.threshold = regions_mod.ThresholdConfig(
            mode="fixed_value", value=fixed_threshold, min_area_m2=cfg.threshold.min_area_m2
        )
    elif quantile is not None:
        cfg.threshold = regions_mod.ThresholdConfig(
            mode="quantile", value=quantile, min_area_m2=cfg.threshold.min_area_m2
        )
    if min_area_m2 is not None:
        cfg.threshold.min_area_m2 = min_area_m2
    if channels is not None:
        cfg.channel_subset = channels if channels == "rgb" else [int(v) for v in channels.split(",")]
    if tile_size is not None:
        cfg.tile_size = tile_size
    if workers is not None:
        cfg.workers = workers
    if density_cutoff is not None:
        cfg.density_cutoff_per_km2 = density_cutoff
    if sweep_quantiles:
        cfg.sweep_quantiles = [float(v) for v in sweep_quantiles.split(",")]
    if debug_anomaly:
        cfg.debug_anomaly_path = debug_anomaly
    if debug_mask:
        cfg.debug_mask_path = debug_mask
    if debug_deviations:
        cfg.debug_deviations_dir = debug_deviations

    try:
        summary, _points = pipeline_mod.run_pipeline(
            scene_path, cfg, out_geojson=out_geojson, out_csv=out_csv, summary_path=summary_path
        )
    except (pipeline_mod.PipelineError, ValueError) as exc:
        raise click.ClickException(str(exc))

    click.echo(json.dumps(summary, indent=2, sort_keys=True))
    if summary["advisory"]:
        click.echo(f"advisory: {summary['advisory_message']}", err=True)


@main.command("evaluate")
@click.option("--points", "points_path", required=True, type=click.Path(exists=True), help="Detected points GeoJSON.")
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True), help="Annotations CSV or GeoJSON.")
@click.option("--radius", type=float, default=100.0, show_default=True, help="Matching radius in meters.")
@click.option("--scene-name", default="", help="Label for the report row.")
@click.option("--out", "report_path", type=click.Path(), help="Write the report as CSV.")
def evaluate_cmd(points_path, truth_path, radius, scene_name, report_path):
    """Score detected points against ground-truth annotations."""
    points, crs = regions_mod.read_points_geojson(points_path)
    annotations = evaluate_mod.load_annotations(truth_path)
    try:
        report = evaluate_mod.match_points(points, annotations, radius_m=radius, scene=scene_name, crs=crs)
    except evaluate_mod.EvaluateError as exc:
        raise click.ClickException(str(exc))
    click.echo(evaluate_mod.recall_table([report]))
    if report_path:
        with open(report_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["scene", "annotated", "tp", "fp", "recall_pct", "tp_points", "radius_m"])
            writer.writerow(
                [
                    report.scene,
                    report.n_annotations,
                    report.n_detected,
                    report.n_false_positive_points,
                    f"{100.0 * report.recall:.1f}",
                    report.n_true_positive_points,
                    report.radius_m,
                ]
            )


@main.command()
@click.option("--out", "out_path", required=True, type=click.Path(), help="Output CSV (ratio, naive_mae, shifted_mae, trials).")
@click.option("--ratios", default="1e-8,1e-6,1e-4,1e-2,1", show_default=True, help="Comma-separated variance/mean ratios.")
@click.option("--trials", type=int, default=100, show_default=True)
@click.option("--mean", type=float, default=1000.0, show_default=True, help="Chip mean intensity.")
@click.option("--kernel", type=int, default=9, show_default=True, help="Window side for the local statistics.")
@click.option("--chip-size", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def stability(out_path, ratios, trials, mean, kernel, chip_size, seed):
    """Compare naive vs shifted float32 windowed-std error against float64."""
    ratio_list = [float(v) for v in ratios.split(",")]
    rows = stability_experiment(
        ratio_list, trials=trials, mean=mean, chip_size=chip_size, kernel_size=kernel, seed=seed
    )
    with open(out_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["ratio", "naive_mae", "shifted_mae", "trials"])
        for row in rows:
            writer.writerow([row["ratio"], repr(row["naive_mae"]), repr(row["shifted_mae"]), row["trials"]])
    for row in rows:
        click.echo(
            f"ratio {row['ratio']:<8g} naive {row['naive_mae']:.3e}  shifted {row['shifted_mae']:.3e}"
        )


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True), help="Scene spec JSON.")
@click.option("--out", "out_path", required=True, type=click.Path(), help="Output raster (.tif or raw).")
@click.option("--truth", "truth_path", type=click.Path(), help="Output truth CSV of blob centers.")
@click.option("--seed", type=int, default=0, show_default=True)
def synth(spec_path, out_path, truth_path, seed):
    """Generate a synthetic ocean scene with injected targets."""
    spec = synth_mod.load_scene_spec(spec_path)
    try:
        scene, n_whitecaps = synth_mod.generate_synthetic_scene(spec, out_path, truth_path, seed=seed)
    except synth_mod.SynthError as exc:
        raise click.ClickException(str(exc))
    click.echo(
        f"wrote {scene.channels}x{scene.height}x{scene.width} scene at {scene.resolution} m/px "
        f"({len(spec.blobs)} blobs, {n_whitecaps} whitecaps) to {out_path}"
    )


@main.command()
@click.option("--points", "points_path", required=True, type=click.Path(exists=True), help="Points GeoJSON from detect.")
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True), help="Scene the points came from.")
@click.option("--labels", "labels_path", required=True, type=click.Path(), help="Label CSV (created if missing).")
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--classes", "classes_path", type=click.Path(exists=True), help="JSON file with a 'classes' list.")
@click.option("--static-dir", type=click.Path(exists=True), help="Frontend bundle directory served at /.")
def serve(points_path, scene_path, labels_path, port, host, classes_path, static_dir):
    """Serve chips around detected points to labelers over HTTP."""
    import uvicorn

    from . import chipservice
    from . import raster

    scene = raster.open_scene(scene_path)
    points, _crs = regions_mod.read_points_geojson(points_path)
    if not points:
        raise click.ClickException(f"{points_path}: no points to label")
    classes = None
    if classes_path:
        with open(classes_path) as f:
            doc = json.load(f)
        classes = doc["classes"] if isinstance(doc, dict) else list(doc)
    chips = chipservice.build_chips(points, scene)
    service = chipservice.LabelService(scene, chips, labels_path, classes=classes)
    app = chipservice.create_app(service, static_dir=static_dir)
    click.echo(f"serving {len(chips)} chips on http://{host}:{port} (labels -> {labels_path})")
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    sys.exit(main())
