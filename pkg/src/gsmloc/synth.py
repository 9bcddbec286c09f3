"""Synthetic GSM world: towers, propagation, and 1 Hz war-drive traces.

Received power follows a log-distance path-loss model plus spatially
correlated shadowing.  Shadowing is a static field: per tower, a seeded
lattice of Gaussian values is interpolated bilinearly, so the same position
always sees the same shadowing.  Fingerprinting presupposes exactly this
kind of repeatable RF environment; training and test visits to a spot must
observe correlated signal strengths.

On top of the static field, trace generation adds small i.i.d. per-reading
measurement noise (seeded per trace), so independently generated training
and test traces differ the way two real drives would.

Everything is deterministic given (world seed, route): regenerating a trace
yields identical bytes.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geo import (
    SENSITIVITY_DBM,
    GeoPoint,
    PlanarPoint,
    ScanVector,
    dbm_to_asu,
    unproject,
)

MAX_SCAN_TOWERS = 7


@dataclass(frozen=True)
class PathLossParams:
    """Log-distance propagation constants.

    p0_dbm: loss at the reference distance d0.
    exponent: path-loss exponent n (2 = free space, up to 5 dense urban).
    shadow_sigma_db: standard deviation of the static shadowing field.
    shadow_grid_spacing: lattice node spacing of the shadowing field;
        controls its spatial correlation length.
    """

    p0_dbm: float = 30.0
    d0: float = 10.0
    exponent: float = 3.0
    shadow_sigma_db: float = 6.0
    shadow_grid_spacing: float = 50.0

    def __post_init__(self) -> None:
        if not 2.0 <= self.exponent <= 5.0:
            raise ValueError("path-loss exponent must be in [2, 5]")
        if self.shadow_sigma_db < 0:
            raise ValueError("shadow_sigma_db must be >= 0")
        if self.d0 <= 0 or self.shadow_grid_spacing <= 0:
            raise ValueError("d0 and shadow_grid_spacing must be > 0")


@dataclass(frozen=True)
class Tower:
    tower_id: str
    location: PlanarPoint
    tx_power_dbm: float


@dataclass(frozen=True)
class Route:
    """A drive: piecewise-linear waypoints traversed at constant speed."""

    waypoints: tuple[PlanarPoint, ...]
    speed: float

    def __post_init__(self) -> None:
        if len(self.waypoints) < 2:
            raise ValueError("route needs at least 2 waypoints")
        if self.speed <= 0:
            raise ValueError("route speed must be > 0")

    @property
    def length(self) -> float:
        return sum(a.distance_to(b) for a, b in zip(self.waypoints, self.waypoints[1:]))


@dataclass(frozen=True, eq=False)
class SynthWorld:
    """Immutable tower layout plus propagation parameters and master seed.

    ``measurement_noise_db`` is the default per-reading jitter added on top
    of the static field when generating traces; it models the second-scale
    RSSI fluctuation a stationary phone reports.
    """

    bounds: tuple[float, float, float, float]  # (x_min, y_min, x_max, y_max)
    towers: tuple[Tower, ...]
    pathloss: PathLossParams
    seed: int
    geo_origin: GeoPoint = GeoPoint(30.0, 31.0)
    measurement_noise_db: float = 2.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        x_min, y_min, x_max, y_max = self.bounds
        if x_max <= x_min or y_max <= y_min:
            raise ValueError("bounds must have positive extent")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        inside = [
            t
            for t in self.towers
            if x_min <= t.location.x <= x_max and y_min <= t.location.y <= y_max
        ]
        if not inside:
            raise ValueError("at least one tower must lie inside the bounds")

    def tower_locations_geo(self) -> dict[str, GeoPoint]:
        """Tower positions as geodetic points (for the tower CSV)."""
        return {t.tower_id: unproject(self.geo_origin, t.location) for t in self.towers}


class _ShadowLattice:
    """Static per-tower shadowing field, bilinear between seeded lattice nodes."""

    def __init__(self, world: SynthWorld, tower_rank: int) -> None:
        x_min, y_min, x_max, y_max = world.bounds
        h = world.pathloss.shadow_grid_spacing
        self.x0 = x_min - h
        self.y0 = y_min - h
        self.h = h
        nx = int(math.ceil((x_max - x_min + 2 * h) / h)) + 1
        ny = int(math.ceil((y_max - y_min + 2 * h) / h)) + 1
        rng = np.random.default_rng(np.random.SeedSequence([world.seed, 1, tower_rank]))
        self.values = rng.normal(0.0, world.pathloss.shadow_sigma_db, size=(ny, nx))

    def at(self, x: float, y: float) -> float:
        ny, nx = self.values.shape
        gx = (x - self.x0) / self.h
        gy = (y - self.y0) / self.h
        i = min(max(int(math.floor(gx)), 0), nx - 2)
        j = min(max(int(math.floor(gy)), 0), ny - 2)
        fx = min(max(gx - i, 0.0), 1.0)
        fy = min(max(gy - j, 0.0), 1.0)
        v = self.values
        return (
            (1 - fy) * ((1 - fx) * v[j, i] + fx * v[j, i + 1])
            + fy * ((1 - fx) * v[j + 1, i] + fx * v[j + 1, i + 1])
        )


def _lattice_for(world: SynthWorld, tower: Tower) -> _ShadowLattice:
    ranks = world._cache.get("ranks")
    if ranks is None:
        ranks = {t.tower_id: i for i, t in enumerate(world.towers)}
        world._cache["ranks"] = ranks
    lattice = world._cache.get(tower.tower_id)
    if lattice is None:
        lattice = _ShadowLattice(world, ranks[tower.tower_id])
        world._cache[tower.tower_id] = lattice
    return lattice


def received_dbm(world: SynthWorld, tower: Tower, p: PlanarPoint) -> float:
    """Static received power at a position: path loss plus shadowing.

    Deterministic in (world seed, tower, position); repeated calls at the
    same point return the same value.
    """
    pl = world.pathloss
    d = tower.location.distance_to(p)
    loss = pl.p0_dbm + 10.0 * pl.exponent * math.log10(max(d, pl.d0) / pl.d0)
    dbm = tower.tx_power_dbm - loss
    if pl.shadow_sigma_db > 0:
        dbm += _lattice_for(world, tower).at(p.x, p.y)
    return dbm


def scan_at(
    world: SynthWorld,
    p: PlanarPoint,
    t: float,
    *,
    noise_rng: np.random.Generator | None = None,
    noise_sigma_db: float = 0.0,
) -> ScanVector:
    """One scan at a position: the up-to-7 strongest audible towers.

    Towers below the receiver sensitivity (-113 dBm, ASU 0) are dropped,
    the rest sorted by decreasing power (ties by tower id), truncated to 7
    and quantized to ASU.  When ``noise_rng`` is given, one Gaussian draw
    per tower (in world order, audible or not) perturbs each reading.

    Raises:
        ValueError: if no tower is audible at ``p``.
    """
    audible: list[tuple[float, str]] = []
    for tower in world.towers:
        dbm = received_dbm(world, tower, p)
        if noise_rng is not None and noise_sigma_db > 0:
            dbm += noise_rng.normal(0.0, noise_sigma_db)
        if dbm >= SENSITIVITY_DBM:
            audible.append((dbm, tower.tower_id))
    if not audible:
        raise ValueError(f"no tower audible at ({p.x:.1f}, {p.y:.1f})")
    audible.sort(key=lambda it: (-it[0], it[1]))
    readings = {tid: dbm_to_asu(dbm) for dbm, tid in audible[:MAX_SCAN_TOWERS]}
    return ScanVector(t, readings, truth=unproject(world.geo_origin, p))


def _route_noise_seed(world: SynthWorld, route: Route) -> np.random.SeedSequence:
    coords = np.array([(w.x, w.y) for w in route.waypoints], dtype=float)
    digest = zlib.crc32(coords.tobytes() + np.float64(route.speed).tobytes())
    return np.random.SeedSequence([world.seed, 2, digest])


def generate_trace(
    world: SynthWorld,
    route: Route,
    *,
    noise_sigma_db: float | None = None,
    noise_seed: int | None = None,
) -> list[ScanVector]:
    """Drive the route at 1 scan per second; ground truth rides along.

    The position advances along the waypoints at the route speed; the trace
    ends at the last waypoint, so a route of length L yields
    ceil(L / speed) + 1 scans.  Measurement noise defaults to the world's
    ``measurement_noise_db`` and is seeded from (world seed, route) unless
    ``noise_seed`` overrides it, so distinct routes give independent traces
    while regeneration is byte-identical.
    """
    if noise_sigma_db is None:
        noise_sigma_db = world.measurement_noise_db
    pts = route.waypoints
    seg_lengths = [a.distance_to(b) for a, b in zip(pts, pts[1:])]
    cumulative = np.concatenate([[0.0], np.cumsum(seg_lengths)])
    total = float(cumulative[-1])
    if total <= 0:
        raise ValueError("route has zero length")

    if noise_sigma_db > 0:
        seed = (
            np.random.SeedSequence([world.seed, 2, noise_seed])
            if noise_seed is not None
            else _route_noise_seed(world, route)
        )
        rng = np.random.default_rng(seed)
    else:
        rng = None

    n_steps = int(math.ceil(total / route.speed - 1e-9))
    scans: list[ScanVector] = []
    for t in range(n_steps + 1):
        dist = min(t * route.speed, total)
        seg = min(int(np.searchsorted(cumulative, dist, side="right")) - 1, len(seg_lengths) - 1)
        frac = (dist - cumulative[seg]) / seg_lengths[seg]
        p = PlanarPoint(
            pts[seg].x + frac * (pts[seg + 1].x - pts[seg].x),
            pts[seg].y + frac * (pts[seg + 1].y - pts[seg].y),
        )
        scans.append(scan_at(world, p, float(t), noise_rng=rng, noise_sigma_db=noise_sigma_db))
    return scans


# ---------------------------------------------------------------------------
# Presets: a rural and an urban world shaped after published testbed stats
# (area, tower count, drive length).  Both drives follow the same "street
# grid" of parallel rows: training covers every street (the rural drive
# doubles back to reach its trace length), the test drive retraces streets
# in the opposite direction one lane over.  Transmit power varies per tower
# and its base level is tuned so a scan hears roughly 5-6 towers.
# ---------------------------------------------------------------------------

_RURAL = {
    "side": 1400.0,  # 1.96 km^2
    "n_towers": 51,
    "exponent": 3.0,
    "shadow_sigma_db": 6.0,
    "shadow_grid_spacing": 60.0,
    "tx_power_dbm": -42.0,
    "tx_spread_db": 32.0,
    "measurement_noise_db": 4.5,
    "speed": 12.0,
    "train_scans": 1599,
    "test_scans": 573,
    "margin": 50.0,
    "street_spacing": 180.0,
    "lane_offset": 15.0,
}

_URBAN = {
    "side": 2335.0,  # 5.45 km^2
    "n_towers": 137,
    "exponent": 3.5,
    "shadow_sigma_db": 8.0,
    "shadow_grid_spacing": 60.0,
    "tx_power_dbm": -32.0,
    "tx_spread_db": 32.0,
    "measurement_noise_db": 4.5,
    "speed": 6.0,
    "train_scans": 3090,
    "test_scans": 1239,
    "margin": 120.0,
    "street_spacing": 250.0,
    "lane_offset": 15.0,
}

PRESETS = {"rural": _RURAL, "urban": _URBAN}


def _serpentine(side: float, margin: float, spacing: float, offset: float) -> list[PlanarPoint]:
    lo, hi = margin, side - margin
    waypoints: list[PlanarPoint] = []
    rows = int(math.floor((hi - lo) / spacing)) + 1
    for i in range(rows):
        y = lo + i * spacing + offset
        xs = (hi, lo) if i % 2 else (lo, hi)
        for x in xs:
            waypoints.append(PlanarPoint(x, y))
    return waypoints


def _polyline_length(waypoints: Sequence[PlanarPoint]) -> float:
    return sum(a.distance_to(b) for a, b in zip(waypoints, waypoints[1:]))


def _trim_polyline(waypoints: Sequence[PlanarPoint], target: float) -> list[PlanarPoint]:
    out = [waypoints[0]]
    acc = 0.0
    for a, b in zip(waypoints, waypoints[1:]):
        seg = a.distance_to(b)
        if acc + seg >= target:
            frac = (target - acc) / seg
            out.append(PlanarPoint(a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y)))
            return out
        acc += seg
        out.append(b)
    raise ValueError(f"polyline shorter ({acc:.0f} m) than requested {target:.0f} m")


def make_preset(name: str, seed: int = 0) -> tuple[SynthWorld, dict[str, Route]]:
    """Build a named world plus its training and test drive routes.

    ``rural`` is a ~2 km^2 area with 51 towers and a 12 m/s drive; ``urban``
    is ~5.45 km^2 with 137 towers, steeper path loss, stronger shadowing
    and a 6 m/s drive.  Route lengths are cut so the 1 Hz traces hit the
    intended training/test scan counts exactly, and the test drive stays on
    the training streets (opposite direction, one lane over) the way two
    passes over the same area would.

    Raises:
        ValueError: for an unknown preset name.
    """
    cfg = PRESETS.get(name)
    if cfg is None:
        raise ValueError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    side = cfg["side"]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    positions = [PlanarPoint(rng.uniform(0.0, side), rng.uniform(0.0, side)) for _ in range(cfg["n_towers"])]
    spread = cfg["tx_spread_db"]
    powers = [cfg["tx_power_dbm"] + rng.uniform(-spread / 2, spread / 2) for _ in positions]
    towers = tuple(
        Tower(tower_id=f"T{i:03d}", location=p, tx_power_dbm=tx)
        for i, (p, tx) in enumerate(zip(positions, powers))
    )
    world = SynthWorld(
        bounds=(0.0, 0.0, side, side),
        towers=towers,
        pathloss=PathLossParams(
            exponent=cfg["exponent"],
            shadow_sigma_db=cfg["shadow_sigma_db"],
            shadow_grid_spacing=cfg["shadow_grid_spacing"],
        ),
        seed=seed,
        measurement_noise_db=cfg["measurement_noise_db"],
    )

    speed = cfg["speed"]
    streets = _serpentine(side, cfg["margin"], cfg["street_spacing"], 0.0)
    train_target = speed * (cfg["train_scans"] - 1)
    if _polyline_length(streets) >= train_target:
        train_path = streets
    else:
        train_path = streets + list(reversed(streets))[1:]  # drive back the same way
    train = Route(tuple(_trim_polyline(train_path, train_target)), speed)

    lane = _serpentine(side, cfg["margin"], cfg["street_spacing"], cfg["lane_offset"])
    test_path = list(reversed(lane))
    test = Route(tuple(_trim_polyline(test_path, speed * (cfg["test_scans"] - 1))), speed)
    return world, {"train": train, "test": test}
