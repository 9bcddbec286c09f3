"""Shared domain types: signal readings, scan vectors and planar geometry.

ASU (Active Set Update) is the integer signal-strength unit reported by GSM
phone APIs, an integer in [0, 31] with dBm = 2*ASU - 113.  A scan is the set
of readings a phone reports in one instant: the serving cell plus up to six
neighbours, so at most seven towers.

All distance math in this package runs in a local planar frame obtained by
an equirectangular projection about a fixed origin.  At the areas this
toolkit targets (a few km across) the projection round-trips within 0.1 m,
so Euclidean geometry on (x, y) is exact for every practical purpose.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

EARTH_RADIUS_M = 6_371_000.0

ASU_MIN = 0
ASU_MAX = 31
SENSITIVITY_DBM = -113.0  # dBm of ASU 0, the weakest reportable signal
MAX_READINGS = 7          # serving cell plus six neighbours

#: Distance from the projection origin beyond which planar coordinates
#: start to accumulate noticeable distortion.
PROJECTION_RANGE_M = 10_000.0


class TraceFormatError(ValueError):
    """A trace or tower CSV file does not match the expected format."""


class ProjectionRangeWarning(UserWarning):
    """A point lies farther from the projection origin than recommended."""


def asu_to_dbm(asu: int) -> float:
    """Convert an ASU reading to dBm (dBm = 2*ASU - 113).

    Raises:
        ValueError: if ``asu`` is outside [0, 31].
    """
    if not ASU_MIN <= asu <= ASU_MAX:
        raise ValueError(f"ASU reading {asu!r} outside [{ASU_MIN}, {ASU_MAX}]")
    return 2.0 * asu - 113.0


def dbm_to_asu(dbm: float) -> int:
    """Quantize a dBm power to the nearest ASU, clamped to [0, 31].

    Rounds half away from zero, so the quantizer is the exact inverse of
    :func:`asu_to_dbm` on the integer ASU range.
    """
    value = (dbm + 113.0) / 2.0
    if value >= 0.0:
        rounded = math.floor(value + 0.5)
    else:
        rounded = math.ceil(value - 0.5)
    return min(max(int(rounded), ASU_MIN), ASU_MAX)


@dataclass(frozen=True)
class GeoPoint:
    """A geodetic position in degrees."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not abs(self.lat) <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not abs(self.lon) <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class PlanarPoint:
    """Meters east (x) and north (y) of a projection origin."""

    x: float
    y: float

    def distance_to(self, other: "PlanarPoint") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def project(origin: GeoPoint, p: GeoPoint) -> PlanarPoint:
    """Project a geodetic point into the planar frame anchored at ``origin``.

    Equirectangular: x = R*cos(origin.lat)*dlon, y = R*dlat (radians).
    Emits :class:`ProjectionRangeWarning` beyond ``PROJECTION_RANGE_M``;
    the result is still returned.
    """
    x = EARTH_RADIUS_M * math.cos(math.radians(origin.lat)) * math.radians(p.lon - origin.lon)
    y = EARTH_RADIUS_M * math.radians(p.lat - origin.lat)
    if math.hypot(x, y) > PROJECTION_RANGE_M:
        warnings.warn(
            f"point {p} is {math.hypot(x, y) / 1000.0:.1f} km from the projection "
            "origin; planar distances degrade beyond 10 km",
            ProjectionRangeWarning,
            stacklevel=2,
        )
    return PlanarPoint(x, y)


def unproject(origin: GeoPoint, p: PlanarPoint) -> GeoPoint:
    """Inverse of :func:`project` for the same origin."""
    lat = origin.lat + math.degrees(p.y / EARTH_RADIUS_M)
    lon = origin.lon + math.degrees(p.x / (EARTH_RADIUS_M * math.cos(math.radians(origin.lat))))
    return GeoPoint(lat, lon)


def _check_asu(asu: int) -> None:
    if not isinstance(asu, int) or isinstance(asu, bool):
        raise TypeError(f"ASU reading must be an int, got {asu!r}")
    if not ASU_MIN <= asu <= ASU_MAX:
        raise ValueError(f"ASU reading {asu!r} outside [{ASU_MIN}, {ASU_MAX}]")


@dataclass(frozen=True)
class ScanRow:
    """One tower reading: a single line of a war-driving trace."""

    timestamp: float
    tower_id: str
    asu: int
    truth: GeoPoint | None = None

    def __post_init__(self) -> None:
        if not self.tower_id:
            raise ValueError("tower_id must be non-empty")
        _check_asu(self.asu)


@dataclass(frozen=True)
class ScanVector:
    """All readings reported at one instant: 1 to 7 towers.

    ``readings`` maps tower id to ASU.  Treat instances as immutable; the
    readings dict must not be mutated after construction.
    """

    timestamp: float
    readings: dict[str, int]
    truth: GeoPoint | None = None

    def __post_init__(self) -> None:
        if not 1 <= len(self.readings) <= MAX_READINGS:
            raise ValueError(
                f"scan at t={self.timestamp} has {len(self.readings)} readings, "
                f"expected 1..{MAX_READINGS}"
            )
        for tower_id, asu in self.readings.items():
            if not tower_id:
                raise ValueError("tower_id must be non-empty")
            _check_asu(asu)


def group_rows_into_scans(rows: Sequence[ScanRow]) -> list[ScanVector]:
    """Merge rows sharing a timestamp into one :class:`ScanVector` each.

    Rows must already be sorted by timestamp (scans arrive once per second,
    so equal timestamps delimit one scan).  A tower repeated within one
    timestamp keeps the last row.  The merged scan carries the ground truth
    of its rows (rows of one scan share it; the last row wins).

    Raises:
        ValueError: if ``rows`` is not sorted by timestamp.
    """
    scans: list[ScanVector] = []
    readings: dict[str, int] = {}
    current_t: float | None = None
    current_truth: GeoPoint | None = None
    for i, row in enumerate(rows):
        if i > 0 and row.timestamp < rows[i - 1].timestamp:
            raise ValueError(
                f"rows not sorted by timestamp: {row.timestamp} after {rows[i - 1].timestamp}"
            )
        if current_t is not None and row.timestamp != current_t:
            scans.append(ScanVector(current_t, readings, current_truth))
            readings = {}
        current_t = row.timestamp
        current_truth = row.truth
        readings[row.tower_id] = row.asu
    if current_t is not None:
        scans.append(ScanVector(current_t, readings, current_truth))
    return scans


# ---------------------------------------------------------------------------
# Trace files
#
# UTF-8 CSV with header ``timestamp,lat,lon,tower_id,asu``, one row per tower
# per scan.  Missing ground truth is encoded as empty lat/lon fields.
# ---------------------------------------------------------------------------

TRACE_HEADER = ("timestamp", "lat", "lon", "tower_id", "asu")
TOWER_HEADER = ("tower_id", "lat", "lon")


def write_trace(scans: Iterable[ScanVector], path: str) -> None:
    """Write scans as a trace CSV, one row per tower (sorted per scan)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for scan in scans:
            if scan.truth is not None:
                lat, lon = repr(scan.truth.lat), repr(scan.truth.lon)
            else:
                lat, lon = "", ""
            for tower_id in sorted(scan.readings):
                writer.writerow([repr(scan.timestamp), lat, lon, tower_id, scan.readings[tower_id]])


def read_trace_rows(path: str) -> list[ScanRow]:
    """Read a trace CSV into rows, validating header and field types."""
    rows: list[ScanRow] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
            raise TraceFormatError(
                f"{path}: expected header {','.join(TRACE_HEADER)!r}, got {header!r}"
            )
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(TRACE_HEADER):
                raise TraceFormatError(f"{path}:{lineno}: expected {len(TRACE_HEADER)} fields")
            t_s, lat_s, lon_s, tower_id, asu_s = rec
            try:
                truth = None
                if lat_s != "" or lon_s != "":
                    truth = GeoPoint(float(lat_s), float(lon_s))
                rows.append(ScanRow(float(t_s), tower_id, int(asu_s), truth))
            except (ValueError, TypeError) as exc:
                raise TraceFormatError(f"{path}:{lineno}: {exc}") from exc
    return rows


def read_trace(path: str) -> list[ScanVector]:
    """Read a trace CSV and group its rows into scans."""
    return group_rows_into_scans(read_trace_rows(path))


def write_tower_locations(towers: Mapping[str, GeoPoint], path: str) -> None:
    """Write a ``tower_id,lat,lon`` CSV (sorted by tower id)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TOWER_HEADER)
        for tower_id in sorted(towers):
            p = towers[tower_id]
            writer.writerow([tower_id, repr(p.lat), repr(p.lon)])


def read_tower_locations(path: str) -> dict[str, GeoPoint]:
    """Read a ``tower_id,lat,lon`` CSV."""
    towers: dict[str, GeoPoint] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TOWER_HEADER:
            raise TraceFormatError(
                f"{path}: expected header {','.join(TOWER_HEADER)!r}, got {header!r}"
            )
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(TOWER_HEADER):
                raise TraceFormatError(f"{path}:{lineno}: expected {len(TOWER_HEADER)} fields")
            tower_id, lat_s, lon_s = rec
            try:
                towers[tower_id] = GeoPoint(float(lat_s), float(lon_s))
            except (ValueError, TypeError) as exc:
                raise TraceFormatError(f"{path}:{lineno}: {exc}") from exc
    return towers
