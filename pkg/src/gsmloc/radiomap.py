"""Offline phase: build the gridded probabilistic fingerprint.

The area covered by a training trace is divided into square cells of side
``grid_length``.  Every training scan contributes one fingerprint point at
its ground-truth position; all points falling in a cell are pooled into one
per-tower ASU histogram, and the cell is represented by the center of mass
of its points.  Cells with no points are simply absent.

Histograms turn into likelihoods through Laplace smoothing over the 32-bin
ASU support, with a small floor probability for towers that were never
heard in a cell, so an online observation can penalize but never veto a
candidate cell.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geo import (
    ASU_MAX,
    GeoPoint,
    PlanarPoint,
    ScanVector,
    project,
)

N_ASU_BINS = ASU_MAX + 1

MAP_FORMAT_VERSION = 1
RADIO_MAP_KIND = "radio_map"


class MapFormatError(ValueError):
    """A persisted map file is malformed, truncated or of an unknown version."""


@dataclass(frozen=True)
class SmoothingParams:
    """Histogram smoothing constants for likelihood evaluation.

    alpha: Laplace constant added to every ASU bin.  Zero-count bins would
        otherwise zero out the whole likelihood product on any unseen ASU.
    p_min: floor probability for a tower with no histogram in a cell.
    """

    alpha: float = 0.5
    p_min: float = 1e-4

    def __post_init__(self) -> None:
        if self.alpha < 0.0:
            raise ValueError("alpha must be >= 0")
        if not 0.0 < self.p_min <= 1.0:
            raise ValueError("p_min must be in (0, 1]")


@dataclass(frozen=True)
class FingerprintPoint:
    """One war-driving sample: a position and the towers heard there."""

    location: PlanarPoint
    readings: dict[str, int]

    def __post_init__(self) -> None:
        if not 1 <= len(self.readings) <= 7:
            raise ValueError(f"fingerprint point has {len(self.readings)} readings")


@dataclass(frozen=True)
class TowerHistogram:
    """ASU histogram of one tower within one grid cell (32 integer bins)."""

    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.counts) != N_ASU_BINS:
            raise ValueError(f"histogram must have {N_ASU_BINS} bins")
        if any(c < 0 for c in self.counts):
            raise ValueError("histogram counts must be non-negative")
        if self.total < 1:
            raise ValueError("stored histograms must hold at least one reading")

    @property
    def total(self) -> int:
        return sum(self.counts)

    def mean_asu(self) -> float:
        return sum(asu * c for asu, c in enumerate(self.counts)) / self.total


@dataclass(frozen=True)
class GridCell:
    """All fingerprint data pooled inside one grid square."""

    cell_index: tuple[int, int]  # (row, col)
    centroid: PlanarPoint
    points: tuple[FingerprintPoint, ...]
    histograms: dict[str, TowerHistogram]


@dataclass(frozen=True, eq=False)
class RadioMap:
    """The probabilistic fingerprint: grid geometry plus per-cell histograms.

    The grid is anchored at the minimum x/y of the training data, so cell
    (row, col) covers [anchor_x + col*G, anchor_x + (col+1)*G) horizontally
    and the same vertically with row.  Immutable after construction; safe
    for concurrent read-only use.
    """

    origin: GeoPoint
    grid_length: float
    anchor_x: float
    anchor_y: float
    cells: dict[tuple[int, int], GridCell]
    tower_ids: frozenset[str]
    tower_locations: dict[str, PlanarPoint] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def has_points(self) -> bool:
        """True when raw fingerprint points were retained in every cell."""
        return all(cell.points for cell in self.cells.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RadioMap):
            return NotImplemented
        return (
            self.origin == other.origin
            and self.grid_length == other.grid_length
            and self.anchor_x == other.anchor_x
            and self.anchor_y == other.anchor_y
            and self.cells == other.cells
            and self.tower_ids == other.tower_ids
            and self.tower_locations == other.tower_locations
        )

    def cell_index_of(self, p: PlanarPoint) -> tuple[int, int]:
        """Grid cell containing a planar point."""
        col = math.floor((p.x - self.anchor_x) / self.grid_length)
        row = math.floor((p.y - self.anchor_y) / self.grid_length)
        return (row, col)

    # -- derived arrays, built lazily and memoized (the map is immutable) --

    def cell_keys(self) -> tuple[tuple[int, int], ...]:
        """Cell indices in deterministic (row, col) order."""
        keys = self._cache.get("cell_keys")
        if keys is None:
            keys = tuple(sorted(self.cells))
            self._cache["cell_keys"] = keys
        return keys

    def centroid_array(self) -> np.ndarray:
        """(n_cells, 2) centroid coordinates aligned with :meth:`cell_keys`."""
        arr = self._cache.get("centroids")
        if arr is None:
            keys = self.cell_keys()
            arr = np.array([[self.cells[k].centroid.x, self.cells[k].centroid.y] for k in keys])
            arr.setflags(write=False)
            self._cache["centroids"] = arr
        return arr

    def tower_index(self) -> dict[str, int]:
        """Stable tower id -> column index mapping (lexicographic)."""
        idx = self._cache.get("tower_index")
        if idx is None:
            idx = {tid: i for i, tid in enumerate(sorted(self.tower_ids))}
            self._cache["tower_index"] = idx
        return idx

    def log_likelihood_table(self, smoothing: SmoothingParams) -> np.ndarray:
        """Smoothed per-cell log-likelihoods, shape (n_towers, 32, n_cells).

        ``table[t, asu]`` is the vector of log P(asu | cell) over all cells
        for tower ``t`` (indices per :meth:`tower_index` and
        :meth:`cell_keys`).  Cells without a histogram for a tower hold
        log(p_min).  With alpha == 0, unseen ASU bins are -inf.
        """
        key = ("loglik", smoothing.alpha, smoothing.p_min)
        table = self._cache.get(key)
        if table is None:
            keys = self.cell_keys()
            tower_index = self.tower_index()
            n_towers = len(tower_index)
            table = np.full(
                (n_towers, N_ASU_BINS, len(keys)), math.log(smoothing.p_min), dtype=float
            )
            alpha = smoothing.alpha
            with np.errstate(divide="ignore"):
                for ci, cell_key in enumerate(keys):
                    for tid, hist in self.cells[cell_key].histograms.items():
                        counts = np.asarray(hist.counts, dtype=float)
                        probs = (counts + alpha) / (hist.total + N_ASU_BINS * alpha)
                        table[tower_index[tid], :, ci] = np.log(probs)
            table.setflags(write=False)
            self._cache[key] = table
        return table

    def mean_asu_matrix(self) -> np.ndarray:
        """(n_cells, n_towers) per-cell mean ASU, 0.0 where a tower is unheard."""
        mat = self._cache.get("mean_asu")
        if mat is None:
            keys = self.cell_keys()
            tower_index = self.tower_index()
            mat = np.zeros((len(keys), len(tower_index)))
            for ci, cell_key in enumerate(keys):
                for tid, hist in self.cells[cell_key].histograms.items():
                    mat[ci, tower_index[tid]] = hist.mean_asu()
            mat.setflags(write=False)
            self._cache["mean_asu"] = mat
        return mat

    def cell_point_arrays(self, key: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
        """One cell's points as arrays: locations (P, 2) and readings (P, n_towers).

        The readings matrix is indexed per :meth:`tower_index` with 0.0 for
        towers a point did not hear, which matches the "not heard is at the
        sensitivity floor" imputation of RSSI-space distances.
        """
        cached = self._cache.get(("points", key))
        if cached is None:
            cell = self.cells[key]
            tower_index = self.tower_index()
            locations = np.array([[p.location.x, p.location.y] for p in cell.points])
            readings = np.zeros((len(cell.points), len(tower_index)))
            for i, p in enumerate(cell.points):
                for tid, asu in p.readings.items():
                    readings[i, tower_index[tid]] = asu
            locations.setflags(write=False)
            readings.setflags(write=False)
            cached = (locations, readings)
            self._cache[("points", key)] = cached
        return cached


def cell_likelihood(
    cell: GridCell, tower_id: str, asu: int, smoothing: SmoothingParams
) -> float:
    """P(asu | cell) for one tower, from the cell's smoothed histogram.

    Returns ``(counts[asu] + alpha) / (total + 32*alpha)`` when the cell has
    a histogram for the tower, else the floor probability ``p_min``.
    """
    hist = cell.histograms.get(tower_id)
    if hist is None:
        return smoothing.p_min
    return (hist.counts[asu] + smoothing.alpha) / (hist.total + N_ASU_BINS * smoothing.alpha)


def build_radio_map(
    scans: Sequence[ScanVector],
    grid_length: float,
    *,
    origin: GeoPoint | None = None,
    tower_locations: Mapping[str, GeoPoint] | None = None,
    strip_points: bool = False,
) -> RadioMap:
    """Build the fingerprint from a ground-truthed training trace.

    Each scan becomes one fingerprint point at its ground-truth position.
    Points are bucketed into grid cells of side ``grid_length`` anchored at
    the minimum x/y of the data, histograms accumulate one count per
    reading, and each cell's centroid is the mean of its member points.

    Args:
        scans: training scans; every one must carry ground truth.
        grid_length: cell side in meters (> 0).
        origin: projection origin; defaults to the centroid of the truths.
        tower_locations: optional geodetic tower positions to embed (the
            cell-ID baseline needs them).
        strip_points: drop raw points after histogramming.  Saves memory
            for deployments that never run the hybrid refinement phase.

    Raises:
        ValueError: on empty input, non-positive grid length, or a scan
            without ground truth (the error names its timestamp).
    """
    if grid_length <= 0:
        raise ValueError("grid_length must be > 0")
    if not scans:
        raise ValueError("cannot build a radio map from an empty trace")
    for scan in scans:
        if scan.truth is None:
            raise ValueError(f"scan at t={scan.timestamp} has no ground truth")

    if origin is None:
        origin = GeoPoint(
            sum(s.truth.lat for s in scans) / len(scans),
            sum(s.truth.lon for s in scans) / len(scans),
        )

    points = [
        FingerprintPoint(project(origin, scan.truth), dict(scan.readings)) for scan in scans
    ]
    anchor_x = min(p.location.x for p in points)
    anchor_y = min(p.location.y for p in points)

    buckets: dict[tuple[int, int], list[FingerprintPoint]] = {}
    for p in points:
        col = math.floor((p.location.x - anchor_x) / grid_length)
        row = math.floor((p.location.y - anchor_y) / grid_length)
        buckets.setdefault((row, col), []).append(p)

    cells: dict[tuple[int, int], GridCell] = {}
    tower_ids: set[str] = set()
    for cell_index in sorted(buckets):
        members = buckets[cell_index]
        centroid = PlanarPoint(
            sum(p.location.x for p in members) / len(members),
            sum(p.location.y for p in members) / len(members),
        )
        counts: dict[str, list[int]] = {}
        for p in members:
            for tid, asu in p.readings.items():
                counts.setdefault(tid, [0] * N_ASU_BINS)[asu] += 1
        histograms = {tid: TowerHistogram(tuple(c)) for tid, c in sorted(counts.items())}
        tower_ids.update(histograms)
        cells[cell_index] = GridCell(
            cell_index=cell_index,
            centroid=centroid,
            points=() if strip_points else tuple(members),
            histograms=histograms,
        )

    planar_towers = None
    if tower_locations is not None:
        planar_towers = {tid: project(origin, gp) for tid, gp in sorted(tower_locations.items())}

    return RadioMap(
        origin=origin,
        grid_length=float(grid_length),
        anchor_x=anchor_x,
        anchor_y=anchor_y,
        cells=cells,
        tower_ids=frozenset(tower_ids),
        tower_locations=planar_towers,
    )


# ---------------------------------------------------------------------------
# Persistence: versioned JSON, deterministic field order, full float precision
# ---------------------------------------------------------------------------


def _point_to_json(p: PlanarPoint) -> dict:
    return {"x": p.x, "y": p.y}


def save_radio_map(radio_map: RadioMap, path: str) -> None:
    """Serialize a map to versioned JSON.  Byte-identical for equal maps."""
    cells = []
    for key in sorted(radio_map.cells):
        cell = radio_map.cells[key]
        entry: dict = {
            "row": key[0],
            "col": key[1],
            "centroid": _point_to_json(cell.centroid),
            "histograms": {
                tid: list(hist.counts) for tid, hist in sorted(cell.histograms.items())
            },
        }
        if cell.points:
            entry["points"] = [
                {
                    "x": p.location.x,
                    "y": p.location.y,
                    "readings": dict(sorted(p.readings.items())),
                }
                for p in cell.points
            ]
        cells.append(entry)
    doc: dict = {
        "version": MAP_FORMAT_VERSION,
        "kind": RADIO_MAP_KIND,
        "origin": {"lat": radio_map.origin.lat, "lon": radio_map.origin.lon},
        "grid_length_m": radio_map.grid_length,
        "grid_anchor": {"x": radio_map.anchor_x, "y": radio_map.anchor_y},
        "towers": sorted(radio_map.tower_ids),
        "cells": cells,
    }
    if radio_map.tower_locations is not None:
        doc["tower_locations"] = {
            tid: _point_to_json(p) for tid, p in sorted(radio_map.tower_locations.items())
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_document(path: str, expected_kind: str) -> dict:
    """Load a versioned JSON envelope, checking version and kind."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MapFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise MapFormatError(f"{path}: expected a JSON object at top level")
    version = doc.get("version")
    if version != MAP_FORMAT_VERSION:
        raise MapFormatError(
            f"{path}: unsupported format version {version!r} (expected {MAP_FORMAT_VERSION})"
        )
    kind = doc.get("kind")
    if kind != expected_kind:
        raise MapFormatError(f"{path}: kind {kind!r}, expected {expected_kind!r}")
    return doc


def load_radio_map(path: str) -> RadioMap:
    """Read a map saved by :func:`save_radio_map`.

    Raises:
        MapFormatError: on version mismatch or a malformed/truncated file;
            no partial map is ever returned.
    """
    doc = load_document(path, RADIO_MAP_KIND)
    try:
        origin = GeoPoint(doc["origin"]["lat"], doc["origin"]["lon"])
        cells: dict[tuple[int, int], GridCell] = {}
        for entry in doc["cells"]:
            key = (int(entry["row"]), int(entry["col"]))
            histograms = {
                tid: TowerHistogram(tuple(int(c) for c in counts))
                for tid, counts in entry["histograms"].items()
            }
            points = tuple(
                FingerprintPoint(
                    PlanarPoint(p["x"], p["y"]),
                    {tid: int(asu) for tid, asu in p["readings"].items()},
                )
                for p in entry.get("points", [])
            )
            cells[key] = GridCell(
                cell_index=key,
                centroid=PlanarPoint(entry["centroid"]["x"], entry["centroid"]["y"]),
                points=points,
                histograms=histograms,
            )
        tower_locations = None
        if "tower_locations" in doc:
            tower_locations = {
                tid: PlanarPoint(p["x"], p["y"]) for tid, p in doc["tower_locations"].items()
            }
        return RadioMap(
            origin=origin,
            grid_length=float(doc["grid_length_m"]),
            anchor_x=float(doc["grid_anchor"]["x"]),
            anchor_y=float(doc["grid_anchor"]["y"]),
            cells=cells,
            tower_ids=frozenset(doc["towers"]),
            tower_locations=tower_locations,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MapFormatError(f"{path}: malformed radio map ({exc})") from exc
