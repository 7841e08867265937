import pytest

from seaspot import raster
from seaspot.synth import BlobSpec, SceneSpec, SynthError, blob_pixel_count, generate_synthetic_scene


def test_zero_blobs_empty_truth(tmp_path):
    spec = SceneSpec(height=64, width=64)
    scene, n_wc = generate_synthetic_scene(spec, tmp_path / "s.tif", tmp_path / "t.csv", seed=0)
    assert n_wc == 0
    lines = (tmp_path / "t.csv").read_text().strip().splitlines()
    assert lines == ["id,lon,lat,confidence,species"]
    assert (scene.height, scene.width, scene.channels) == (64, 64, 3)


def test_blob_outside_scene_rejected(tmp_path):
    spec = SceneSpec(height=64, width=64, blobs=[BlobSpec(row=100, col=10)])
    with pytest.raises(SynthError, match="outside"):
        generate_synthetic_scene(spec, tmp_path / "s.tif", seed=0)


def test_blob_visibly_brighter_than_ocean(tmp_path):
    spec = SceneSpec(height=96, width=96, ocean_sigma=10.0, blobs=[BlobSpec(row=48, col=48, amplitude_sigma=10.0)])
    scene, _ = generate_synthetic_scene(spec, tmp_path / "s.tif", seed=1)
    block, _ = raster.read_window(scene, scene.full_window())
    hot = block[0, 48, 48]
    assert hot > spec.ocean_mean + 8 * spec.ocean_sigma


def test_seeded_generation_is_byte_identical(tmp_path):
    spec = SceneSpec(height=64, width=64, blobs=[BlobSpec(row=30, col=30)])
    generate_synthetic_scene(spec, tmp_path / "a.tif", tmp_path / "a.csv", seed=7)
    generate_synthetic_scene(spec, tmp_path / "b.tif", tmp_path / "b.csv", seed=7)
    assert (tmp_path / "a.tif").read_bytes() == (tmp_path / "b.tif").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    generate_synthetic_scene(spec, tmp_path / "c.tif", seed=8)
    assert (tmp_path / "a.tif").read_bytes() != (tmp_path / "c.tif").read_bytes()


def test_truth_csv_matches_injection_sites(tmp_path):
    blobs = [BlobSpec(row=20, col=30), BlobSpec(row=50.5, col=10.25)]
    spec = SceneSpec(height=64, width=64, blobs=blobs, resolution_m=0.5, origin=(1000.0, 2000.0))
    scene, _ = generate_synthetic_scene(spec, tmp_path / "s.tif", tmp_path / "t.csv", seed=0)
    import csv

    with open(tmp_path / "t.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 2
    for row, blob in zip(rows, blobs):
        r, c = scene.geo_to_pixel(float(row["lon"]), float(row["lat"]))
        assert abs(r - blob.row) < 1e-6 and abs(c - blob.col) < 1e-6


def test_whitecap_count_scales_with_density(tmp_path):
    spec = SceneSpec(height=200, width=200, resolution_m=1.0, whitecaps_per_km2=100.0)
    # 0.04 km^2 * 100/km^2 = 4 speckles
    _, n_wc = generate_synthetic_scene(spec, tmp_path / "s.tif", seed=3)
    assert n_wc == 4


def test_spec_from_dict_validation():
    spec = SceneSpec.from_dict({"height": 32, "width": 32, "blobs": [{"row": 4, "col": 5}]})
    assert spec.blobs[0].col == 5
    with pytest.raises(SynthError, match="unknown"):
        SceneSpec.from_dict({"bogus_field": 1})


def test_blob_pixel_count_sizing():
    # plateau 1.6 / sigma 1.2 was sized to be a ~30 px target at half amplitude
    assert blob_pixel_count(BlobSpec(row=0, col=0, sigma_px=1.2, plateau_px=1.6)) >= 17
    assert blob_pixel_count(BlobSpec(row=0, col=0, sigma_px=0.5, plateau_px=0.0)) < 17
