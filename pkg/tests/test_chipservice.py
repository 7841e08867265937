import csv
import threading
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from fastapi.testclient import TestClient

from seaspot import geotiff, raster
from seaspot.chipservice import DEFAULT_CLASSES, LabelService, ServiceError, build_chips, create_app
from seaspot.regions import InterestingPoint


@pytest.fixture
def scene(tmp_path, rng):
    arr = rng.normal(500, 20, (3, 900, 900)).astype(np.float32)
    path = tmp_path / "svc.tif"
    geotiff.write(path, arr, geotransform=(500000.0, 0.3, 0.0, 4640000.0, 0.0, -0.3), crs="EPSG:32619")
    return raster.open_scene(path)


def make_points(n, scene):
    pts = []
    for i in range(n):
        x, y = scene.pixel_to_geo(170 + 70 * i, 170 + 70 * i)
        pts.append(InterestingPoint(id=f"p-{i:02d}", x=x, y=y, area_m2=2.0, mean_anomaly=8.0, scene_id="svc"))
    return pts


@pytest.fixture
def service(scene, tmp_path):
    chips = build_chips(make_points(5, scene), scene)
    return LabelService(scene, chips, tmp_path / "labels.csv")


@pytest.fixture
def client(service):
    return TestClient(create_app(service))


class FakeClock:
    def __init__(self):
        self.t = datetime(2026, 8, 9, 12, 0, 0, tzinfo=timezone.utc)

    def __call__(self):
        return self.t

    def advance(self, seconds):
        self.t += timedelta(seconds=seconds)


# -- chip geometry ----------------------------------------------------------


def test_chip_window_side_from_resolution(scene):
    chips = build_chips(make_points(1, scene), scene)
    w = chips["p-00"].window
    assert (w.width, w.height) == (333, 333)  # round(100 m / 0.3 m/px)


def test_corner_chip_is_clamped(scene):
    x, y = scene.pixel_to_geo(2, 2)
    pts = [InterestingPoint(id="corner", x=x, y=y, area_m2=1.0, mean_anomaly=1.0, scene_id="svc")]
    chips = build_chips(pts, scene)
    w = chips["corner"].window
    assert w.row_off == 0 and w.col_off == 0
    assert w.width < 333 and w.height < 333


# -- assignment ordering ------------------------------------------------


def test_fresh_pool_serves_lowest_id(client):
    assert client.get("/api/next", params={"labeler": "alice"}).json()["chip_id"] == "p-00"


def test_labeler_done_after_labeling_everything(client):
    for _ in range(5):
        nxt = client.get("/api/next", params={"labeler": "solo"}).json()
        r = client.post("/api/label", json={"chip_id": nxt["chip_id"], "labeler": "solo", "class": "ship"})
        assert r.status_code == 200
    assert client.get("/api/next", params={"labeler": "solo"}).json() == {"done": True}


def test_partially_labeled_chip_outranks_fresh(service):
    for lb in ("a", "b"):
        got = service.next_chip(lb)
        assert got["chip_id"] == "p-00"
        service.submit_label("p-00", lb, "ship")
    # p-00 now has 2 labels; a new labeler must get it before untouched chips
    assert service.next_chip("c")["chip_id"] == "p-00"


def test_re_request_returns_same_outstanding_chip(service):
    first = service.next_chip("alice")
    second = service.next_chip("alice")
    assert first["chip_id"] == second["chip_id"]


def test_empty_labeler_rejected(client):
    assert client.get("/api/next", params={"labeler": ""}).status_code == 400
    assert client.get("/api/next").status_code == 400


# -- retirement ----------------------------------------------------------


def test_retire_after_three_distinct_labelers(client):
    for lb in ("a", "b", "c"):
        nxt = client.get("/api/next", params={"labeler": lb}).json()
        assert nxt["chip_id"] == "p-00"
        r = client.post("/api/label", json={"chip_id": "p-00", "labeler": lb, "class": "whitecap"})
        assert r.status_code == 200
    assert client.get("/api/progress").json()["retired"] == 1
    # a fourth labeler never receives p-00
    assert client.get("/api/next", params={"labeler": "d"}).json()["chip_id"] == "p-01"


def test_duplicate_labeler_rejected(service):
    service.next_chip("a")
    service.submit_label("p-00", "a", "ship")
    # force the same chip back: a holds nothing, but submitting again on
    # p-00 must fail on distinctness no matter how it is attempted
    service.next_chip("a")  # now holds p-01
    with pytest.raises(ServiceError) as err:
        service.submit_label("p-00", "a", "ship")
    assert err.value.status == 409
    assert len(service.labels_by_chip["p-00"]) == 1


def test_fourth_label_blocked_even_if_outstanding(service):
    # d is serving p-00 while a, b, c retire it; d's submit must be refused
    assert service.next_chip("d")["chip_id"] == "p-00"
    for lb in ("a", "b", "c"):
        assert service.next_chip(lb)["chip_id"] == "p-00"
        service.submit_label("p-00", lb, "whitecap")
    assert service.is_retired("p-00")
    with pytest.raises(ServiceError) as err:
        service.submit_label("p-00", "d", "whale", confidence="possible")
    assert err.value.status == 409
    assert len(service.labels_by_chip["p-00"]) == 3


# -- label validation ----------------------------------------------------


def test_whale_requires_confidence(client):
    nxt = client.get("/api/next", params={"labeler": "a"}).json()
    r = client.post("/api/label", json={"chip_id": nxt["chip_id"], "labeler": "a", "class": "whale"})
    assert r.status_code == 400
    r = client.post(
        "/api/label",
        json={"chip_id": nxt["chip_id"], "labeler": "a", "class": "whale", "confidence": "definite", "species": "E. australis"},
    )
    assert r.status_code == 200


def test_confidence_on_non_whale_rejected(client):
    nxt = client.get("/api/next", params={"labeler": "a"}).json()
    r = client.post(
        "/api/label",
        json={"chip_id": nxt["chip_id"], "labeler": "a", "class": "ship", "confidence": "definite"},
    )
    assert r.status_code == 400


def test_unknown_chip_and_class(client):
    client.get("/api/next", params={"labeler": "a"})
    assert client.post("/api/label", json={"chip_id": "nope", "labeler": "a", "class": "ship"}).status_code == 404
    assert client.post("/api/label", json={"chip_id": "p-00", "labeler": "a", "class": "kraken"}).status_code == 400


def test_submit_without_outstanding_chip_rejected(service):
    with pytest.raises(ServiceError) as err:
        service.submit_label("p-00", "ghost", "ship")
    assert err.value.status == 409


def test_class_list_must_include_whale(scene, tmp_path):
    with pytest.raises(ValueError, match="whale"):
        LabelService(scene, {}, tmp_path / "x.csv", classes=["ship", "debris"])


# -- CSV persistence ----------------------------------------------------


def test_csv_columns_exact(service, tmp_path):
    service.next_chip("a")
    service.submit_label("p-00", "a", "whale", species="right whale", confidence="probable", comment="fluke?")
    header = (tmp_path / "labels.csv").read_text().splitlines()[0]
    assert header == "chip_id,labeler_id,class,species,confidence,comment,lon,lat,scene_id,served_at_iso8601,labeled_at_iso8601,duration_s"
    with open(tmp_path / "labels.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert rows[0]["class"] == "whale"
    assert rows[0]["species"] == "right whale"
    assert rows[0]["confidence"] == "probable"
    assert float(rows[0]["duration_s"]) >= 0.0


def test_csv_append_only(service, tmp_path):
    service.next_chip("a")
    service.submit_label("p-00", "a", "ship")
    first = (tmp_path / "labels.csv").read_text()
    service.next_chip("b")
    service.submit_label("p-00", "b", "debris")
    second = (tmp_path / "labels.csv").read_text()
    assert second.startswith(first)


def test_restart_replays_csv_to_identical_state(scene, tmp_path):
    chips = build_chips(make_points(5, scene), scene)
    svc = LabelService(scene, chips, tmp_path / "labels.csv")
    for lb in ("a", "b", "c"):
        svc.next_chip(lb)
        svc.submit_label("p-00", lb, "whitecap")
    svc.next_chip("a")
    svc.submit_label("p-01", "a", "ship")
    svc.next_chip("zed")  # outstanding, never labeled: must NOT survive restart
    before = svc.state_snapshot()
    svc.close()

    svc2 = LabelService(scene, chips, tmp_path / "labels.csv")
    assert svc2.state_snapshot() == before
    assert svc2.outstanding == {}
    assert svc2.is_retired("p-00")
    # and the reborn service keeps enforcing distinctness
    svc2.next_chip("a")
    with pytest.raises(ServiceError):
        svc2.submit_label("p-01", "a", "ship")


def test_unexpected_csv_schema_rejected(scene, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("who,what\nx,y\n")
    with pytest.raises(ValueError, match="columns"):
        LabelService(scene, {}, bad)


# -- staleness ------------------------------------------------------------


def test_stale_outstanding_chip_is_replaced(scene, tmp_path):
    clock = FakeClock()
    chips = build_chips(make_points(5, scene), scene)
    svc = LabelService(scene, chips, tmp_path / "labels.csv", stale_after_s=1800, clock=clock)
    first = svc.next_chip("a")["chip_id"]
    clock.advance(1801)
    # after the timeout the old assignment is dropped; labeling it fails
    second = svc.next_chip("a")["chip_id"]
    assert second == first  # still the best candidate, but re-served fresh
    clock.advance(10)
    svc.submit_label(second, "a", "ship")
    with open(tmp_path / "labels.csv", newline="") as f:
        row = list(csv.DictReader(f))[0]
    assert float(row["duration_s"]) == pytest.approx(10.0)


def test_duration_uses_server_clock(scene, tmp_path):
    clock = FakeClock()
    chips = build_chips(make_points(2, scene), scene)
    svc = LabelService(scene, chips, tmp_path / "labels.csv", clock=clock)
    svc.next_chip("a")
    clock.advance(4.5)
    svc.submit_label("p-00", "a", "unsure")
    with open(tmp_path / "labels.csv", newline="") as f:
        row = list(csv.DictReader(f))[0]
    assert float(row["duration_s"]) == pytest.approx(4.5)


# -- rendering ----------------------------------------------------------


def test_render_constant_chip_mid_gray(scene, tmp_path):
    from PIL import Image
    import io

    arr = np.full((3, 400, 400), 777.0, np.float32)
    path = tmp_path / "const.tif"
    geotiff.write(path, arr, geotransform=(0.0, 0.3, 0.0, 120.0, 0.0, -0.3), crs="EPSG:32619")
    const_scene = raster.open_scene(path)
    pts = [InterestingPoint(id="c", x=60.0, y=60.0, area_m2=1.0, mean_anomaly=1.0, scene_id="x")]
    svc = LabelService(const_scene, build_chips(pts, const_scene), tmp_path / "l.csv")
    png = svc.render_png("c")
    img = np.asarray(Image.open(io.BytesIO(png)))
    assert img.shape[2] == 3
    assert (img == 128).all()


def test_render_corner_chip_matches_clamped_size(scene, tmp_path):
    from PIL import Image
    import io

    x, y = scene.pixel_to_geo(0, 0)
    pts = [InterestingPoint(id="corner", x=x, y=y, area_m2=1.0, mean_anomaly=1.0, scene_id="svc")]
    svc = LabelService(scene, build_chips(pts, scene), tmp_path / "l.csv")
    chip = svc.chips["corner"]
    img = Image.open(io.BytesIO(svc.render_png("corner")))
    assert img.size == (chip.window.width, chip.window.height)


def test_render_gradient_stretch(tmp_path):
    from PIL import Image
    import io

    # single-channel gradient chip: the 2nd percentile pixel must map to 0,
    # the 98th to 255, monotone in between (direct stretch oracle)
    grad = np.linspace(0, 1000, 200 * 200, dtype=np.float32).reshape(1, 200, 200)
    path = tmp_path / "grad.tif"
    geotiff.write(path, grad, geotransform=(0.0, 0.5, 0.0, 100.0, 0.0, -0.5), crs="EPSG:32619")
    gscene = raster.open_scene(path)
    pts = [InterestingPoint(id="g", x=50.0, y=50.0, area_m2=1.0, mean_anomaly=1.0, scene_id="g")]
    svc = LabelService(gscene, build_chips(pts, gscene), tmp_path / "l.csv")
    chip = svc.chips["g"]
    img = np.asarray(Image.open(io.BytesIO(svc.render_png("g"))))

    block, _ = raster.read_window(gscene, chip.window)
    vals = np.sort(block[0].ravel())
    lo = np.percentile(vals, 2.0)
    hi = np.percentile(vals, 98.0)
    assert img[block[0] <= lo].max() == 0
    assert img[block[0] >= hi].min() == 255
    rows_mid = img[100]
    assert (np.diff(rows_mid.astype(int)) >= 0).all()


def test_render_fully_nodata_chip_fails(tmp_path):
    arr = np.full((1, 300, 300), -1.0, np.float32)
    path = tmp_path / "nd.tif"
    geotiff.write(path, arr, geotransform=(0.0, 0.5, 0.0, 150.0, 0.0, -0.5), crs="EPSG:32619", nodata=-1.0)
    nd_scene = raster.open_scene(path)
    pts = [InterestingPoint(id="n", x=75.0, y=75.0, area_m2=1.0, mean_anomaly=1.0, scene_id="n")]
    svc = LabelService(nd_scene, build_chips(pts, nd_scene), tmp_path / "l.csv")
    with pytest.raises(ServiceError) as err:
        svc.render_png("n")
    assert err.value.status == 409


# -- progress ---------------------------------------------------------------


def test_progress_empty(client):
    prog = client.get("/api/progress").json()
    assert prog == {"total": 5, "retired": 0, "labels": 0, "per_class": {}, "mean_duration_s": {}}


def test_progress_mean_duration(scene, tmp_path):
    clock = FakeClock()
    chips = build_chips(make_points(3, scene), scene)
    svc = LabelService(scene, chips, tmp_path / "l.csv", clock=clock)
    for secs, chip in ((2.0, "p-00"), (4.0, "p-01"), (6.0, "p-02")):
        svc.next_chip("a")
        clock.advance(secs)
        svc.submit_label(chip, "a", "debris")
    assert svc.progress()["mean_duration_s"]["debris"] == pytest.approx(4.0)


def test_progress_matches_csv_recount(scene, tmp_path, rng):
    chips = build_chips(make_points(5, scene), scene)
    svc = LabelService(scene, chips, tmp_path / "l.csv")
    labelers = ["a", "b", "c", "d"]
    classes = ["ship", "whitecap", "unsure", "debris"]
    for lb in labelers:
        while True:
            nxt = svc.next_chip(lb)
            if nxt is None:
                break
            svc.submit_label(nxt["chip_id"], lb, classes[int(rng.integers(0, 4))])
    prog = svc.progress()
    # spreadsheet oracle: recount from the CSV itself
    with open(tmp_path / "l.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    counts = {}
    sums = {}
    for row in rows:
        counts[row["class"]] = counts.get(row["class"], 0) + 1
        sums.setdefault(row["class"], []).append(float(row["duration_s"]))
    assert prog["per_class"] == counts
    for cls, vals in sums.items():
        assert prog["mean_duration_s"][cls] == pytest.approx(sum(vals) / len(vals))


# -- concurrency --------------------------------------------------------


def test_concurrent_assignment_invariants(scene, tmp_path):
    chips = build_chips(make_points(5, scene), scene)
    svc = LabelService(scene, chips, tmp_path / "l.csv")
    app = create_app(svc)
    served = []
    done_count = [0]
    lock = threading.Lock()

    def worker(labeler):
        with TestClient(app) as c:
            for _ in range(10):
                r = c.get("/api/next", params={"labeler": labeler}).json()
                if r.get("done"):
                    with lock:
                        done_count[0] += 1
                    return
                c.post("/api/label", json={"chip_id": r["chip_id"], "labeler": labeler, "class": "unsure"})
                with lock:
                    served.append((labeler, r["chip_id"]))

    threads = [threading.Thread(target=worker, args=(f"lab{i}",)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    # per-labeler: no chip served-and-labeled twice
    for lb in {s[0] for s in served}:
        mine = [c for l, c in served if l == lb]
        assert len(mine) == len(set(mine))
    # every chip has at most 3 distinct labelers and retirement is exact
    for cid, labelers in svc.labels_by_chip.items():
        assert len(labelers) <= 3
        assert svc.is_retired(cid) == (len(labelers) == 3)


def test_default_class_list_has_sixteen():
    assert len(DEFAULT_CLASSES) == 16
    assert len(set(DEFAULT_CLASSES)) == 16
    assert {"whale", "ship", "debris", "oil"} <= set(DEFAULT_CLASSES)


def test_fallback_page_served_without_bundle(client):
    r = client.get("/")
    assert r.status_code == 200
    assert "chip service" in r.text


def test_classes_endpoint(client):
    doc = client.get("/api/classes").json()
    assert doc["classes"] == DEFAULT_CLASSES
    assert doc["confidence_levels"] == ["possible", "probable", "definite"]
