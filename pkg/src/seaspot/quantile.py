"""Exact nearest-rank quantiles over data too large to sort in memory.

The quantile of n values at q is the order statistic (1-based, ascending)
at rank floor(q*n) + 1, capped at n — equivalently ceil(q*n) whenever q*n
is not an integer. With this convention 1..10000 at q = 0.9999 yields
10000, and strictly fewer than (1-q)*n values ever exceed the quantile.
For streaming sources it is found by multi-pass histogram refinement: each
pass histograms the candidate value interval into 4096 bins, narrows to
the bin containing the target rank, and repeats until the candidates fit
a memory budget, where an exact sort finishes the job. Bin membership is
decided by a monotone index function of the value, so equal values always
share a bin and the refinement never splits ties.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .validation import check_quantile

_N_BINS = 4096
_SORT_BUDGET = 4_000_000


def _as_source(chunks) -> Callable[[], Iterable[np.ndarray]]:
    """Normalize input to a callable returning a fresh chunk iterator."""
    if callable(chunks):
        return chunks
    if isinstance(chunks, np.ndarray):
        arr = chunks
        return lambda: iter((arr,))
    if isinstance(chunks, Sequence):
        seq = list(chunks)
        return lambda: iter(seq)
    raise TypeError("chunks must be an array, a sequence of arrays, or a callable returning an iterable")


def _clean(chunk: np.ndarray) -> np.ndarray:
    vals = np.asarray(chunk).ravel()
    if vals.dtype.kind != "f":
        vals = vals.astype(np.float32)
    return vals[np.isfinite(vals)]


def nearest_rank(q: float, n: int) -> int:
    """1-based rank of the q-quantile among n values: floor(q*n) + 1, capped at n."""
    if n < 1:
        raise ValueError("rank of empty data")
    return min(n, math.floor(q * n) + 1)


def nearest_rank_quantile(chunks, q: float) -> float:
    """Exact q-quantile (nearest-rank) of all finite values in the chunks.

    ``chunks`` may be a single array, a sequence of arrays, or a zero-arg
    callable returning a fresh iterable of arrays (required for true
    streaming sources, since refinement makes several passes). NaN/inf
    values are ignored; raises ValueError when no finite values exist.
    """
    q = check_quantile(q)
    source = _as_source(chunks)

    n = 0
    lo = np.inf
    hi = -np.inf
    for chunk in source():
        vals = _clean(chunk)
        if vals.size:
            n += vals.size
            lo = min(lo, float(vals.min()))
            hi = max(hi, float(vals.max()))
    if n == 0:
        raise ValueError("quantile of empty data (no valid values)")
    rank = nearest_rank(q, n)
    if lo == hi:
        return lo

    # rank among candidates within [lo, hi]; values below `lo` are already
    # accounted for in `below`
    below = 0
    while True:
        hist = np.zeros(_N_BINS, dtype=np.int64)
        bin_min = np.full(_N_BINS, np.inf)
        bin_max = np.full(_N_BINS, -np.inf)
        in_range = 0
        for chunk in source():
            vals = _clean(chunk)
            if not vals.size:
                continue
            vals = vals[(vals >= lo) & (vals <= hi)]
            if not vals.size:
                continue
            in_range += vals.size
            idx = _bin_index(vals, lo, hi)
            hist += np.bincount(idx, minlength=_N_BINS)
            np.minimum.at(bin_min, idx, vals.astype(np.float64))
            np.maximum.at(bin_max, idx, vals.astype(np.float64))

        target = rank - below
        cum = np.cumsum(hist)
        b = int(np.searchsorted(cum, target, side="left"))
        count = int(hist[b])
        new_lo, new_hi = float(bin_min[b]), float(bin_max[b])
        below += int(cum[b - 1]) if b > 0 else 0

        if new_lo == new_hi:
            return new_lo
        if count <= _SORT_BUDGET or (new_lo == lo and new_hi == hi):
            return _finish_sorted(source, new_lo, new_hi, rank - below)
        lo, hi = new_lo, new_hi


def _bin_index(vals: np.ndarray, lo: float, hi: float) -> np.ndarray:
    # float64 throughout; monotone non-decreasing in the value, so ties
    # never straddle a bin boundary
    scaled = (vals.astype(np.float64) - lo) * (_N_BINS / (hi - lo))
    return np.clip(scaled.astype(np.int64), 0, _N_BINS - 1)


def _finish_sorted(source, lo: float, hi: float, target_rank: int) -> float:
    parts = []
    for chunk in source():
        vals = _clean(chunk)
        if vals.size:
            vals = vals[(vals >= lo) & (vals <= hi)]
            if vals.size:
                parts.append(vals)
    cand = np.sort(np.concatenate(parts))
    return float(cand[target_rank - 1])
