import numpy as np
import pytest

from seaspot import geotiff, raster

UTM = "EPSG:32619"


def make_geotransform(res=0.3, origin=(500000.0, 4640000.0)):
    return (origin[0], res, 0.0, origin[1], 0.0, -res)


@pytest.fixture
def scene_factory(tmp_path):
    """Write an array as a GeoTIFF scene and open it."""

    counter = {"n": 0}

    def make(array, res=0.3, crs=UTM, nodata=None, fmt="tif", is_geographic=False):
        counter["n"] += 1
        name = f"scene{counter['n']}.{'tif' if fmt == 'tif' else 'bin'}"
        path = tmp_path / name
        gt = make_geotransform(res)
        if fmt == "tif":
            geotiff.write(path, array, geotransform=gt, crs=crs, nodata=nodata, is_geographic=is_geographic)
        else:
            geotiff.write_raw(path, array, geotransform=gt, crs=crs, nodata=nodata, is_geographic=is_geographic)
        return raster.open_scene(path)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
