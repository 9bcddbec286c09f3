"""gsmloc: grid-based probabilistic RSSI fingerprinting for GSM localization.

The package splits along the natural pipeline:

* :mod:`gsmloc.geo` - readings, scans, ASU/dBm conversion, planar projection,
  trace CSV I/O.
* :mod:`gsmloc.radiomap` - offline fingerprint construction and persistence.
* :mod:`gsmloc.estimators` - the probabilistic, hybrid, deterministic-KNN
  and cell-ID estimators.
* :mod:`gsmloc.gp` - the Gaussian-process modeling baseline.
* :mod:`gsmloc.synth` - synthetic GSM worlds and war-drive trace generation.
* :mod:`gsmloc.bench` - evaluation metrics, sweeps and CSV reports.
* :mod:`gsmloc.cli` - the ``gsmloc`` command line.
"""

from .bench import (
    DEFAULT_GRID_M,
    EvalReport,
    PRESET_GP_SPACING_M,
    PRESET_PARAMS,
    TECHNIQUES,
    ablate_towers,
    evaluate,
    sweep_density,
    preset_params,
    sweep_grid_length,
    sweep_k,
    sweep_ns,
    sweep_tower_drop,
    thin_fingerprint,
    write_cdf_csv,
    write_report_csv,
)
from .estimators import (
    EstimatorParams,
    LocationEstimate,
    ScanWindow,
    cell_log_posterior,
    cellid_locate,
    deterministic_locate,
    hybrid_locate,
    probabilistic_locate,
    rssi_distance,
)
from .geo import (
    GeoPoint,
    PlanarPoint,
    ProjectionRangeWarning,
    ScanRow,
    ScanVector,
    TraceFormatError,
    asu_to_dbm,
    dbm_to_asu,
    group_rows_into_scans,
    project,
    read_tower_locations,
    read_trace,
    read_trace_rows,
    unproject,
    write_tower_locations,
    write_trace,
)
from .gp import (
    GpHyperparams,
    GpTowerModel,
    PrecomputedGrid,
    fit_tower_models,
    gp_build_grid,
    gp_fit,
    gp_locate,
    gp_predict,
    kernel,
    load_grid,
    save_grid,
)
from .radiomap import (
    FingerprintPoint,
    GridCell,
    MapFormatError,
    RadioMap,
    SmoothingParams,
    TowerHistogram,
    build_radio_map,
    cell_likelihood,
    load_radio_map,
    save_radio_map,
)
from .synth import (
    PathLossParams,
    Route,
    SynthWorld,
    Tower,
    generate_trace,
    make_preset,
    received_dbm,
    scan_at,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_GRID_M",
    "EvalReport",
    "EstimatorParams",
    "FingerprintPoint",
    "GeoPoint",
    "GpHyperparams",
    "GpTowerModel",
    "GridCell",
    "LocationEstimate",
    "MapFormatError",
    "PathLossParams",
    "PRESET_GP_SPACING_M",
    "PRESET_PARAMS",
    "PlanarPoint",
    "PrecomputedGrid",
    "ProjectionRangeWarning",
    "RadioMap",
    "Route",
    "ScanRow",
    "ScanVector",
    "ScanWindow",
    "SmoothingParams",
    "SynthWorld",
    "TECHNIQUES",
    "Tower",
    "TowerHistogram",
    "TraceFormatError",
    "ablate_towers",
    "asu_to_dbm",
    "build_radio_map",
    "cell_likelihood",
    "cell_log_posterior",
    "cellid_locate",
    "dbm_to_asu",
    "deterministic_locate",
    "evaluate",
    "fit_tower_models",
    "generate_trace",
    "gp_build_grid",
    "gp_fit",
    "gp_locate",
    "gp_predict",
    "group_rows_into_scans",
    "hybrid_locate",
    "kernel",
    "load_grid",
    "load_radio_map",
    "make_preset",
    "preset_params",
    "probabilistic_locate",
    "project",
    "read_tower_locations",
    "read_trace",
    "read_trace_rows",
    "received_dbm",
    "rssi_distance",
    "save_grid",
    "save_radio_map",
    "scan_at",
    "sweep_density",
    "sweep_grid_length",
    "sweep_k",
    "sweep_ns",
    "sweep_tower_drop",
    "thin_fingerprint",
    "unproject",
    "write_cdf_csv",
    "write_report_csv",
    "write_tower_locations",
    "write_trace",
]
