"""Online phase: position estimators over a radio map.

Four techniques share the :class:`~gsmloc.radiomap.RadioMap` fingerprint:

* :func:`probabilistic_locate` scores every grid cell with the smoothed
  histogram likelihood of a window of scans (accumulated in log domain),
  then returns the posterior-weighted average of the K most probable cell
  centroids.
* :func:`hybrid_locate` runs two phases: a rough pass that picks the most
  probable cell from the window's first scan only, then a K-nearest-neighbor
  refinement in ASU space over that cell's raw fingerprint points.
* :func:`deterministic_locate` is the classic KNN baseline: cells are
  summarized by their mean ASU per tower and the nearest cells in RSSI
  space are averaged with inverse-distance weights.
* :func:`cellid_locate` returns the known location of the strongest tower.

All estimators are pure functions of immutable inputs: identical inputs
give bit-identical outputs, and concurrent calls are safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .geo import PlanarPoint, ScanVector
from .radiomap import RadioMap, SmoothingParams


@dataclass(frozen=True)
class EstimatorParams:
    """Online-phase knobs: window length, averaging count, smoothing."""

    n_samples: int = 4
    k: int = 2
    smoothing: SmoothingParams = field(default_factory=SmoothingParams)

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class ScanWindow(Sequence[ScanVector]):
    """A short run of consecutive scans with strictly increasing timestamps."""

    scans: tuple[ScanVector, ...]

    def __post_init__(self) -> None:
        _check_scans(self.scans)

    def __len__(self) -> int:
        return len(self.scans)

    def __getitem__(self, i):  # noqa: ANN001 - Sequence protocol
        return self.scans[i]


@dataclass(frozen=True)
class LocationEstimate:
    """An estimated position plus how it was formed.

    ``log_score`` is the unnormalized log posterior of the winning cell for
    the probabilistic techniques and ``None`` where no posterior exists.
    ``contributing_cells`` lists (cell_index, weight) pairs whose weights
    sum to 1.
    """

    location: PlanarPoint
    log_score: float | None = None
    contributing_cells: tuple[tuple[tuple[int, int], float], ...] = ()


def _check_scans(scans: Sequence[ScanVector]) -> Sequence[ScanVector]:
    if len(scans) == 0:
        raise ValueError("window must contain at least one scan")
    for a, b in zip(scans, scans[1:]):
        if not b.timestamp > a.timestamp:
            raise ValueError("window timestamps must be strictly increasing")
    return scans


def _as_scans(window: Sequence[ScanVector]) -> Sequence[ScanVector]:
    if isinstance(window, ScanWindow):
        return window.scans  # validated at construction
    return _check_scans(window)


def _posterior_vector(
    radio_map: RadioMap, scans: Sequence[ScanVector], smoothing: SmoothingParams
) -> np.ndarray:
    """Unnormalized log posterior per cell, aligned with ``radio_map.cell_keys()``.

    Towers observed online but absent from the whole map contribute a flat
    log(p_min) to every cell, which can never change the ranking.
    """
    table = radio_map.log_likelihood_table(smoothing)
    tower_index = radio_map.tower_index()
    total = np.zeros(radio_map.n_cells)
    log_p_min = math.log(smoothing.p_min)
    for scan in scans:
        for tower_id, asu in scan.readings.items():
            t = tower_index.get(tower_id)
            if t is None:
                total += log_p_min
            else:
                total += table[t, asu]
    return total


def cell_log_posterior(
    radio_map: RadioMap,
    window: Sequence[ScanVector],
    params: EstimatorParams | None = None,
) -> dict[tuple[int, int], float]:
    """Log P(window | cell) for every cell, under a uniform location prior.

    The score of a cell is the sum over scans and over the towers observed
    in each scan of the log smoothed histogram likelihood.  Accumulation is
    entirely in log domain, so long windows cannot underflow.
    """
    params = params or EstimatorParams()
    scans = _as_scans(window)
    scores = _posterior_vector(radio_map, scans, params.smoothing)
    return {key: float(s) for key, s in zip(radio_map.cell_keys(), scores)}


def _top_k_stable(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest scores; ties resolve to the lowest index."""
    order = np.argsort(-scores, kind="stable")
    return order[:k]


def probabilistic_locate(
    radio_map: RadioMap,
    window: Sequence[ScanVector],
    params: EstimatorParams | None = None,
) -> LocationEstimate:
    """Grid-histogram Bayes estimate: weighted average of the top-K cells.

    The K cells with the highest log posterior are selected (ties broken by
    (row, col) order), their posteriors renormalized over the K via
    log-sum-exp, and the estimate is the weighted average of their
    centroids.  K = 1 degenerates to the most-probable-cell centroid.
    """
    params = params or EstimatorParams()
    if not radio_map.cells:
        raise ValueError("radio map has no cells")
    scans = _as_scans(window)
    scores = _posterior_vector(radio_map, scans, params.smoothing)
    keys = radio_map.cell_keys()

    k = min(params.k, len(keys))
    top = _top_k_stable(scores, k)
    top_scores = scores[top]
    m = top_scores[0]
    if math.isfinite(m):
        weights = np.exp(top_scores - m)
        weights /= weights.sum()
    else:
        # Every candidate has zero likelihood (possible only with alpha=0);
        # fall back to uniform weights over the K for determinism.
        weights = np.full(k, 1.0 / k)
    centroids = radio_map.centroid_array()[top]
    x, y = weights @ centroids
    contributing = tuple((keys[i], float(w)) for i, w in zip(top, weights))
    return LocationEstimate(PlanarPoint(float(x), float(y)), float(m), contributing)


def rssi_distance(a: Mapping[str, int], b: Mapping[str, int]) -> float:
    """Euclidean distance in ASU space over the union of tower ids.

    A tower missing from one side is imputed as ASU 0: "not heard" sits at
    the sensitivity floor.
    """
    total = 0.0
    for tower_id in a.keys() | b.keys():
        d = a.get(tower_id, 0) - b.get(tower_id, 0)
        total += d * d
    return math.sqrt(total)


def hybrid_locate(
    radio_map: RadioMap,
    window: Sequence[ScanVector],
    k_refine: int = 1,
    smoothing: SmoothingParams | None = None,
) -> LocationEstimate:
    """Two-phase estimate: rough probabilistic cell pick, then KNN refinement.

    Phase one scores cells with only the first scan of the window (one
    sample keeps the rough pass cheap) and takes the most probable cell.
    Phase two runs K-nearest-neighbor in ASU space over that cell's raw
    fingerprint points against the same scan and returns the unweighted
    mean of the ``k_refine`` nearest point locations.

    Raises:
        ValueError: if the map was built with ``strip_points=True``.
    """
    if k_refine < 1:
        raise ValueError("k_refine must be >= 1")
    if not radio_map.cells:
        raise ValueError("radio map has no cells")
    smoothing = smoothing or SmoothingParams()
    scans = _as_scans(window)
    first = scans[0]

    scores = _posterior_vector(radio_map, [first], smoothing)
    best = int(np.argmax(scores))  # ties resolve to the lowest (row, col)
    key = radio_map.cell_keys()[best]
    cell = radio_map.cells[key]
    if not cell.points:
        raise ValueError("hybrid refinement needs raw points; map was built with strip_points")

    # Squared ASU-space distance against every point of the cell at once;
    # ranks identically to rssi_distance() over the union of tower ids with
    # missing-as-0 (towers unknown to the map shift all points equally).
    locations, readings = radio_map.cell_point_arrays(key)
    tower_index = radio_map.tower_index()
    v = np.zeros(readings.shape[1])
    for tower_id, asu in first.readings.items():
        t = tower_index.get(tower_id)
        if t is not None:
            v[t] = asu
    diff = readings - v
    sq_dists = (diff * diff).sum(axis=1)
    if k_refine == 1:
        x, y = locations[int(np.argmin(sq_dists))]  # first minimum, as below
    else:
        nearest = np.argsort(sq_dists, kind="stable")[: min(k_refine, len(cell.points))]
        x, y = locations[nearest].mean(axis=0)
    return LocationEstimate(PlanarPoint(float(x), float(y)), float(scores[best]), ((key, 1.0),))


def deterministic_locate(
    radio_map: RadioMap,
    window: Sequence[ScanVector],
    params: EstimatorParams | None = None,
) -> LocationEstimate:
    """KNN baseline over cells in RSSI space with inverse-distance weights.

    Each cell is represented by its mean ASU per tower; the window's
    readings are averaged per tower into one query vector.  The K nearest
    cells by :func:`rssi_distance` are averaged, weighted by 1/(d + 1e-6).
    """
    params = params or EstimatorParams()
    if not radio_map.cells:
        raise ValueError("radio map has no cells")
    scans = _as_scans(window)

    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for scan in scans:
        for tower_id, asu in scan.readings.items():
            sums[tower_id] = sums.get(tower_id, 0.0) + asu
            counts[tower_id] = counts.get(tower_id, 0) + 1
    query = {tid: sums[tid] / counts[tid] for tid in sums}

    tower_index = radio_map.tower_index()
    v = np.zeros(len(tower_index))
    unknown_sq = 0.0  # towers the map never heard anywhere
    for tower_id, mean_asu in query.items():
        t = tower_index.get(tower_id)
        if t is None:
            unknown_sq += mean_asu * mean_asu
        else:
            v[t] = mean_asu
    diff = radio_map.mean_asu_matrix() - v
    dists = np.sqrt((diff * diff).sum(axis=1) + unknown_sq)

    keys = radio_map.cell_keys()
    k = min(params.k, len(keys))
    nearest = np.argsort(dists, kind="stable")[:k]
    weights = 1.0 / (dists[nearest] + 1e-6)
    weights /= weights.sum()
    centroids = radio_map.centroid_array()[nearest]
    x, y = weights @ centroids
    contributing = tuple((keys[i], float(w)) for i, w in zip(nearest, weights))
    return LocationEstimate(PlanarPoint(float(x), float(y)), None, contributing)


def cellid_locate(radio_map: RadioMap, scan: ScanVector) -> LocationEstimate:
    """Return the stored location of the strongest tower in the scan.

    Ties on ASU resolve to the lexicographically smallest tower id.

    Raises:
        ValueError: if the map has no tower registry or the strongest tower
            is not in it.
    """
    if radio_map.tower_locations is None:
        raise ValueError("radio map has no tower locations; cell-ID needs them")
    tower_id = min(scan.readings, key=lambda tid: (-scan.readings[tid], tid))
    location = radio_map.tower_locations.get(tower_id)
    if location is None:
        raise ValueError(f"no known location for tower {tower_id!r}")
    return LocationEstimate(location, None, ())
