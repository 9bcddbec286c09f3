"""Gaussian-process modeling baseline.

One independent GP per tower regresses ASU on planar position with a
squared-exponential kernel, k(p, q) = sigma_f^2 * exp(-|p - q|^2 / (2 l^2)),
and additive observation noise sigma_n^2.  Values are centered on the
per-tower training mean before fitting (and the mean added back at
prediction), so far from the data the posterior reverts to the tower's
typical level instead of ASU 0.

Hyperparameters come from a deterministic grid search maximizing the log
marginal likelihood.  For localization, posterior mean and variance are
precomputed on a dense lattice of points once; each online estimate then
weights every lattice point by its Gaussian likelihood of the observed
readings and returns the weighted average position.  That per-point work is
what makes this baseline much slower than the histogram techniques.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.stats import norm

from .estimators import LocationEstimate, _as_scans
from .geo import GeoPoint, PlanarPoint, ScanVector, project
from .radiomap import MAP_FORMAT_VERSION, MapFormatError, load_document

GP_GRID_KIND = "gp_grid"

DEFAULT_LENGTH_SCALES_M = (50.0, 100.0, 200.0, 400.0, 800.0)
DEFAULT_SIGNAL_VARS = (25.0, 100.0, 400.0)
DEFAULT_NOISE_VARS = (1.0, 4.0, 16.0)

_JITTER_START = 1e-8
_JITTER_RETRIES = 3


class GpFitError(RuntimeError):
    """Kernel matrix factorization failed even after jitter retries."""


@dataclass(frozen=True)
class GpHyperparams:
    """Squared-exponential kernel parameters (ASU^2 variances, meters)."""

    sigma_f2: float
    sigma_n2: float
    length_scale: float

    def __post_init__(self) -> None:
        if self.sigma_f2 <= 0 or self.sigma_n2 <= 0 or self.length_scale <= 0:
            raise ValueError("all GP hyperparameters must be strictly positive")


def default_hyper_grid() -> list[GpHyperparams]:
    """The deterministic hyperparameter grid searched by :func:`gp_fit`."""
    return [
        GpHyperparams(sf2, sn2, ls)
        for ls in DEFAULT_LENGTH_SCALES_M
        for sf2 in DEFAULT_SIGNAL_VARS
        for sn2 in DEFAULT_NOISE_VARS
    ]


def kernel(p: PlanarPoint, q: PlanarPoint, hyper: GpHyperparams) -> float:
    """Squared-exponential covariance between two positions."""
    d2 = (p.x - q.x) ** 2 + (p.y - q.y) ** 2
    return hyper.sigma_f2 * math.exp(-d2 / (2.0 * hyper.length_scale**2))


def _kernel_matrix(xa: np.ndarray, xb: np.ndarray, hyper: GpHyperparams) -> np.ndarray:
    d2 = ((xa[:, None, :] - xb[None, :, :]) ** 2).sum(axis=2)
    return hyper.sigma_f2 * np.exp(-d2 / (2.0 * hyper.length_scale**2))


def _cholesky_with_jitter(k_noisy: np.ndarray, sigma_f2: float) -> np.ndarray:
    jitter = _JITTER_START * sigma_f2
    try:
        return np.linalg.cholesky(k_noisy)
    except np.linalg.LinAlgError:
        pass
    for _ in range(_JITTER_RETRIES):
        try:
            return np.linalg.cholesky(k_noisy + jitter * np.eye(len(k_noisy)))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise GpFitError("kernel matrix is not positive definite even after jitter")


@dataclass(frozen=True, eq=False)
class GpTowerModel:
    """Fitted per-tower GP posterior over planar position.

    Stores the training set, the lower Cholesky factor of K + sigma_n^2 I
    and the precomputed solve against the centered targets, which is all
    that posterior evaluation needs.
    """

    locations: np.ndarray  # (n, 2)
    values: np.ndarray  # (n,) raw ASU
    hyper: GpHyperparams
    mean_offset: float
    chol: np.ndarray  # (n, n) lower triangular
    alpha: np.ndarray  # (n,)
    log_marginal: float

    @property
    def n_training(self) -> int:
        return len(self.values)


def gp_log_marginal_likelihood(
    locations: np.ndarray, values: np.ndarray, hyper: GpHyperparams
) -> float:
    """Log marginal likelihood of (mean-centered) values under the GP prior."""
    x = np.asarray(locations, dtype=float)
    y = np.asarray(values, dtype=float)
    yc = y - y.mean()
    k_noisy = _kernel_matrix(x, x, hyper) + hyper.sigma_n2 * np.eye(len(x))
    chol = _cholesky_with_jitter(k_noisy, hyper.sigma_f2)
    alpha = solve_triangular(chol.T, solve_triangular(chol, yc, lower=True), lower=False)
    return float(
        -0.5 * yc @ alpha - np.log(np.diag(chol)).sum() - 0.5 * len(x) * math.log(2.0 * math.pi)
    )


def gp_fit(
    locations: Sequence[PlanarPoint] | np.ndarray,
    values: Sequence[float] | np.ndarray,
    hyper_grid: Iterable[GpHyperparams] | None = None,
    *,
    max_points: int = 500,
    seed: int = 0,
) -> GpTowerModel:
    """Fit one tower's GP, selecting hyperparameters by grid search.

    The candidate maximizing the log marginal likelihood wins (first
    maximum on ties, in grid order).  Training sets larger than
    ``max_points`` are subsampled uniformly at random with the given seed.

    Raises:
        ValueError: with fewer than 2 training points.
        GpFitError: if factorization fails even after jitter retries.
    """
    x = np.array([[p.x, p.y] for p in locations]) if not isinstance(locations, np.ndarray) else np.asarray(locations, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2 or len(x) != len(y):
        raise ValueError("locations must be (n, 2) and match values")
    if len(x) < 2:
        raise ValueError("GP fit needs at least 2 training points")
    if len(x) > max_points:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(x), size=max_points, replace=False))
        x, y = x[keep], y[keep]

    candidates = list(hyper_grid) if hyper_grid is not None else default_hyper_grid()
    if not candidates:
        raise ValueError("hyper_grid must contain at least one candidate")
    best: GpHyperparams | None = None
    best_lml = -math.inf
    for hyper in candidates:
        lml = gp_log_marginal_likelihood(x, y, hyper)
        if lml > best_lml:
            best, best_lml = hyper, lml

    assert best is not None
    mean_offset = float(y.mean())
    yc = y - mean_offset
    k_noisy = _kernel_matrix(x, x, best) + best.sigma_n2 * np.eye(len(x))
    chol = _cholesky_with_jitter(k_noisy, best.sigma_f2)
    alpha = solve_triangular(chol.T, solve_triangular(chol, yc, lower=True), lower=False)
    x.setflags(write=False)
    y.setflags(write=False)
    chol.setflags(write=False)
    alpha.setflags(write=False)
    return GpTowerModel(
        locations=x,
        values=y,
        hyper=best,
        mean_offset=mean_offset,
        chol=chol,
        alpha=alpha,
        log_marginal=best_lml,
    )


def _predict_many(model: GpTowerModel, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k_star = _kernel_matrix(model.locations, pts, model.hyper)  # (n, m)
    mean = k_star.T @ model.alpha + model.mean_offset
    w = solve_triangular(model.chol, k_star, lower=True)
    var = model.hyper.sigma_f2 - (w * w).sum(axis=0)
    return mean, np.maximum(var, 0.0)


def gp_predict(model: GpTowerModel, p: PlanarPoint) -> tuple[float, float]:
    """Posterior mean and variance of the tower's ASU field at a point."""
    mean, var = _predict_many(model, np.array([[p.x, p.y]]))
    return float(mean[0]), float(var[0])


def fit_tower_models(
    scans: Sequence[ScanVector],
    origin: GeoPoint,
    *,
    hyper_grid: Iterable[GpHyperparams] | None = None,
    max_points: int = 500,
    seed: int = 0,
    min_points: int = 2,
) -> dict[str, GpTowerModel]:
    """Fit one GP per tower from a ground-truthed trace.

    Towers heard at fewer than ``min_points`` positions are skipped.
    Per-tower subsampling seeds derive from (seed, tower rank), so results
    do not depend on fit order.
    """
    by_tower: dict[str, list[tuple[PlanarPoint, float]]] = {}
    for scan in scans:
        if scan.truth is None:
            raise ValueError(f"scan at t={scan.timestamp} has no ground truth")
        p = project(origin, scan.truth)
        for tower_id, asu in scan.readings.items():
            by_tower.setdefault(tower_id, []).append((p, float(asu)))

    models: dict[str, GpTowerModel] = {}
    for rank, tower_id in enumerate(sorted(by_tower)):
        data = by_tower[tower_id]
        if len(data) < max(min_points, 2):
            continue
        tower_seed = int(np.random.SeedSequence([seed, rank]).generate_state(1)[0])
        models[tower_id] = gp_fit(
            [p for p, _ in data],
            [v for _, v in data],
            hyper_grid,
            max_points=max_points,
            seed=tower_seed,
        )
    return models


@dataclass(frozen=True, eq=False)
class PrecomputedGrid:
    """Per-tower GP posterior evaluated on a dense lattice of points."""

    origin: GeoPoint
    spacing: float
    points: np.ndarray  # (n_points, 2)
    towers: tuple[str, ...]
    means: dict[str, np.ndarray]
    variances: dict[str, np.ndarray]
    noise_vars: dict[str, float]

    @property
    def n_points(self) -> int:
        return len(self.points)


def gp_build_grid(
    models: Mapping[str, GpTowerModel],
    bounds: tuple[float, float, float, float],
    spacing: float,
    origin: GeoPoint,
) -> PrecomputedGrid:
    """Evaluate every tower model on a regular lattice over ``bounds``.

    The lattice includes both edges of each axis: a span of exactly
    ``k * spacing`` yields k + 1 points per axis.
    """
    if spacing <= 0:
        raise ValueError("spacing must be > 0")
    x_min, y_min, x_max, y_max = bounds
    if x_max < x_min or y_max < y_min:
        raise ValueError("bounds must not be empty")
    if not models:
        raise ValueError("at least one tower model is required")
    nx = int(math.floor((x_max - x_min) / spacing + 1e-9)) + 1
    ny = int(math.floor((y_max - y_min) / spacing + 1e-9)) + 1
    xs = x_min + spacing * np.arange(nx)
    ys = y_min + spacing * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys)
    points = np.column_stack([gx.ravel(), gy.ravel()])
    points.setflags(write=False)

    means: dict[str, np.ndarray] = {}
    variances: dict[str, np.ndarray] = {}
    noise_vars: dict[str, float] = {}
    for tower_id in sorted(models):
        model = models[tower_id]
        mean, var = _predict_many(model, points)
        mean.setflags(write=False)
        var.setflags(write=False)
        means[tower_id] = mean
        variances[tower_id] = var
        noise_vars[tower_id] = model.hyper.sigma_n2
    return PrecomputedGrid(
        origin=origin,
        spacing=float(spacing),
        points=points,
        towers=tuple(sorted(models)),
        means=means,
        variances=variances,
        noise_vars=noise_vars,
    )


def gp_locate(grid: PrecomputedGrid, window: Sequence[ScanVector]) -> LocationEstimate:
    """Likelihood-weighted average of all precomputed points.

    Each point's log likelihood sums, over the window's scans and observed
    towers with a model, the Gaussian log density of the observed ASU under
    (posterior mean, posterior variance + observation noise).  Weights come
    from a log-sum-exp over all points; observed towers without a model are
    skipped.
    """
    if grid.n_points == 0:
        raise ValueError("precomputed grid is empty")
    scans = _as_scans(window)
    ll = np.zeros(grid.n_points)
    used = 0
    for scan in scans:
        for tower_id, asu in scan.readings.items():
            mean = grid.means.get(tower_id)
            if mean is None:
                continue
            var = grid.variances[tower_id] + grid.noise_vars[tower_id]
            ll += norm.logpdf(asu, loc=mean, scale=np.sqrt(var))
            used += 1
    if used == 0:
        raise ValueError("no observed tower has a GP model")
    m = ll.max()
    weights = np.exp(ll - m)
    weights /= weights.sum()
    x, y = weights @ grid.points
    return LocationEstimate(PlanarPoint(float(x), float(y)), float(m), ())


# ---------------------------------------------------------------------------
# Persistence: same versioned JSON envelope as the radio map, kind "gp_grid"
# ---------------------------------------------------------------------------


def save_grid(grid: PrecomputedGrid, path: str) -> None:
    """Serialize a precomputed grid to versioned JSON."""
    doc = {
        "version": MAP_FORMAT_VERSION,
        "kind": GP_GRID_KIND,
        "origin": {"lat": grid.origin.lat, "lon": grid.origin.lon},
        "spacing_m": grid.spacing,
        "points": [{"x": float(x), "y": float(y)} for x, y in grid.points],
        "towers": {
            tid: {
                "mean": [float(v) for v in grid.means[tid]],
                "var": [float(v) for v in grid.variances[tid]],
                "noise_var": grid.noise_vars[tid],
            }
            for tid in grid.towers
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_grid(path: str) -> PrecomputedGrid:
    """Read a grid saved by :func:`save_grid`."""
    doc = load_document(path, GP_GRID_KIND)
    try:
        points = np.array([[p["x"], p["y"]] for p in doc["points"]], dtype=float)
        points = points.reshape(len(doc["points"]), 2)
        points.setflags(write=False)
        means: dict[str, np.ndarray] = {}
        variances: dict[str, np.ndarray] = {}
        noise_vars: dict[str, float] = {}
        for tid, entry in doc["towers"].items():
            mean = np.asarray(entry["mean"], dtype=float)
            var = np.asarray(entry["var"], dtype=float)
            if len(mean) != len(points) or len(var) != len(points):
                raise ValueError(f"tower {tid!r} arrays do not match the point count")
            mean.setflags(write=False)
            var.setflags(write=False)
            means[tid] = mean
            variances[tid] = var
            noise_vars[tid] = float(entry["noise_var"])
        return PrecomputedGrid(
            origin=GeoPoint(doc["origin"]["lat"], doc["origin"]["lon"]),
            spacing=float(doc["spacing_m"]),
            points=points,
            towers=tuple(sorted(means)),
            means=means,
            variances=variances,
            noise_vars=noise_vars,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MapFormatError(f"{path}: malformed GP grid ({exc})") from exc
