"""seaspot: statistical interesting-point detection in ocean satellite imagery.

Pixels are standardized against local context (chunked or rolling-window
z-scores with a numerically stable shifted-variance formulation), channel
deviations are aggregated and thresholded at a high quantile, contiguous
anomalous regions are filtered by physical area, and the surviving
centroids become "interesting points" for expert review through the chip
labeling service.
"""

from .quantile import nearest_rank_quantile
from .raster import RasterScene, Window, open_scene, read_window
from .regions import (
    InterestingPoint,
    Region,
    ThresholdConfig,
    aggregate_abs_deviation,
    binarize,
    connected_components,
    connected_components_tiled,
    filter_and_extract_points,
    points_per_km2,
)
from .standardize import (
    ChunkedStandardizer,
    RollingStandardizer,
    chunked_deviations,
    local_mean_var,
    rolling_deviations,
    stability_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "ChunkedStandardizer",
    "InterestingPoint",
    "RasterScene",
    "Region",
    "RollingStandardizer",
    "ThresholdConfig",
    "Window",
    "aggregate_abs_deviation",
    "binarize",
    "chunked_deviations",
    "connected_components",
    "connected_components_tiled",
    "filter_and_extract_points",
    "local_mean_var",
    "nearest_rank_quantile",
    "open_scene",
    "points_per_km2",
    "read_window",
    "rolling_deviations",
    "stability_experiment",
    "__version__",
]
