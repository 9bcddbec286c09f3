import json
import math
import random

import pytest

from conftest import ORIGIN, scan_at_planar
from gsmloc.geo import GeoPoint
from gsmloc.radiomap import (
    MapFormatError,
    RadioMap,
    SmoothingParams,
    TowerHistogram,
    build_radio_map,
    cell_likelihood,
    load_radio_map,
    save_radio_map,
)
from oracles import random_instance

import numpy as np


class TestBuild:
    def test_four_corner_points_one_cell(self):
        scans = [
            scan_at_planar(t, x, y, {"A": 10})
            for t, (x, y) in enumerate([(1.0, 1.0), (69.0, 1.0), (1.0, 69.0), (69.0, 69.0)])
        ]
        rm = build_radio_map(scans, 70.0, origin=ORIGIN)
        assert rm.n_cells == 1
        ((key, cell),) = rm.cells.items()
        assert cell.centroid.x == pytest.approx(35.0, abs=1e-9)
        assert cell.centroid.y == pytest.approx(35.0, abs=1e-9)
        assert cell.histograms["A"].counts[10] == 4
        assert cell.histograms["A"].total == 4

    def test_two_points_two_cells(self):
        scans = [
            scan_at_planar(0, 10.0, 10.0, {"A": 5}),
            scan_at_planar(1, 100.0, 10.0, {"A": 6}),
        ]
        rm = build_radio_map(scans, 70.0, origin=ORIGIN)
        assert rm.n_cells == 2
        assert all(len(c.points) == 1 for c in rm.cells.values())

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            build_radio_map([], 70.0)

    def test_missing_truth_names_timestamp(self):
        from gsmloc.geo import ScanVector

        scans = [scan_at_planar(0, 1.0, 1.0, {"A": 5}), ScanVector(17.5, {"A": 5})]
        with pytest.raises(ValueError, match="17.5"):
            build_radio_map(scans, 70.0)

    def test_bad_grid_length(self):
        with pytest.raises(ValueError):
            build_radio_map([scan_at_planar(0, 1.0, 1.0, {"A": 5})], 0.0)

    def test_total_points_equals_scan_count(self):
        rng = np.random.default_rng(3)
        rm, _ = random_instance(rng)
        n_scans = sum(len(c.points) for c in rm.cells.values())
        rebuilt_total = sum(
            sum(h.total for h in c.histograms.values()) for c in rm.cells.values()
        )
        readings_total = sum(
            len(p.readings) for c in rm.cells.values() for p in c.points
        )
        assert rebuilt_total == readings_total
        assert n_scans >= rm.n_cells  # every cell holds at least one point

    def test_grid_assignment_consistent(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            rm, _ = random_instance(rng)
            g = rm.grid_length
            for (row, col), cell in rm.cells.items():
                for p in cell.points:
                    assert rm.anchor_x + col * g <= p.location.x < rm.anchor_x + (col + 1) * g
                    assert rm.anchor_y + row * g <= p.location.y < rm.anchor_y + (row + 1) * g

    def test_histograms_match_member_readings(self):
        rng = np.random.default_rng(5)
        rm, _ = random_instance(rng)
        for cell in rm.cells.values():
            per_tower = {}
            for p in cell.points:
                for tid, asu in p.readings.items():
                    per_tower.setdefault(tid, []).append(asu)
            assert set(per_tower) == set(cell.histograms)
            for tid, values in per_tower.items():
                assert cell.histograms[tid].total == len(values)
                for asu in values:
                    assert cell.histograms[tid].counts[asu] >= 1

    def test_shuffled_rebuild_identical(self):
        rng = np.random.default_rng(7)
        scans = [
            scan_at_planar(t, rng.uniform(0, 200), rng.uniform(0, 200), {"A": 5, "B": 9})
            for t in range(40)
        ]
        rm1 = build_radio_map(scans, 70.0, origin=ORIGIN)
        shuffled = scans[:]
        random.Random(0).shuffle(shuffled)
        shuffled.sort(key=lambda s: s.timestamp)
        rm2 = build_radio_map(shuffled, 70.0, origin=ORIGIN)
        assert rm1 == rm2

    def test_strip_points(self):
        scans = [scan_at_planar(0, 1.0, 1.0, {"A": 5})]
        rm = build_radio_map(scans, 70.0, origin=ORIGIN, strip_points=True)
        assert not rm.has_points
        assert all(c.points == () for c in rm.cells.values())

    def test_default_origin_is_truth_centroid(self):
        scans = [
            scan_at_planar(0, 0.0, 0.0, {"A": 5}),
            scan_at_planar(1, 100.0, 0.0, {"A": 5}),
        ]
        rm = build_radio_map(scans, 70.0)
        lats = [s.truth.lat for s in scans]
        lons = [s.truth.lon for s in scans]
        assert rm.origin.lat == pytest.approx(sum(lats) / 2)
        assert rm.origin.lon == pytest.approx(sum(lons) / 2)


class TestHistogram:
    def test_requires_32_bins(self):
        with pytest.raises(ValueError):
            TowerHistogram((1,) * 31)

    def test_requires_a_count(self):
        with pytest.raises(ValueError):
            TowerHistogram((0,) * 32)

    def test_mean(self):
        counts = [0] * 32
        counts[10] = 3
        counts[20] = 1
        assert TowerHistogram(tuple(counts)).mean_asu() == pytest.approx(12.5)


class TestCellLikelihood:
    @staticmethod
    def _cell_with(counts_map, n=None):
        scans = []
        t = 0
        for asu, count in counts_map.items():
            for _ in range(count):
                scans.append(scan_at_planar(t, 1.0, 1.0, {"A": asu}))
                t += 1
        rm = build_radio_map(scans, 70.0, origin=ORIGIN)
        return next(iter(rm.cells.values()))

    def test_laplace_smoothing_value(self):
        cell = self._cell_with({10: 4})
        sm = SmoothingParams(alpha=0.5)
        assert cell_likelihood(cell, "A", 10, sm) == pytest.approx(4.5 / 20.0, abs=1e-15)

    def test_uniform_histogram_alpha_zero(self):
        cell = self._cell_with({asu: 1 for asu in range(32)})
        sm = SmoothingParams(alpha=0.0)
        for asu in (0, 7, 31):
            assert cell_likelihood(cell, "A", asu, sm) == pytest.approx(1 / 32, abs=1e-15)

    def test_unheard_tower_floor(self):
        cell = self._cell_with({10: 4})
        sm = SmoothingParams()
        assert cell_likelihood(cell, "ZZZ", 10, sm) == 1e-4

    def test_sums_to_one_alpha_zero(self):
        cell = self._cell_with({3: 2, 9: 5, 30: 1})
        sm = SmoothingParams(alpha=0.0)
        total = sum(cell_likelihood(cell, "A", asu, sm) for asu in range(32))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_sums_to_one_alpha_positive(self):
        cell = self._cell_with({3: 2, 9: 5})
        sm = SmoothingParams(alpha=0.5)
        total = sum(cell_likelihood(cell, "A", asu, sm) for asu in range(32))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_table_matches_scalar_op(self):
        rng = np.random.default_rng(2)
        rm, _ = random_instance(rng)
        sm = SmoothingParams()
        table = rm.log_likelihood_table(sm)
        tower_index = rm.tower_index()
        keys = rm.cell_keys()
        for ci, key in enumerate(keys):
            cell = rm.cells[key]
            for tid, t in tower_index.items():
                for asu in range(32):
                    expected = math.log(cell_likelihood(cell, tid, asu, sm))
                    assert table[t, asu, ci] == pytest.approx(expected, rel=1e-12)


class TestPersistence:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(13)
        rm, _ = random_instance(rng)
        path = tmp_path / "map.json"
        save_radio_map(rm, str(path))
        assert load_radio_map(str(path)) == rm

    def test_round_trip_with_tower_locations(self, tmp_path):
        scans = [scan_at_planar(0, 1.0, 1.0, {"A": 5})]
        rm = build_radio_map(
            scans, 70.0, origin=ORIGIN, tower_locations={"A": GeoPoint(30.001, 31.0)}
        )
        path = tmp_path / "map.json"
        save_radio_map(rm, str(path))
        assert load_radio_map(str(path)) == rm

    def test_save_is_deterministic(self, tmp_path):
        rng = np.random.default_rng(17)
        rm, _ = random_instance(rng)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_radio_map(rm, str(p1))
        save_radio_map(rm, str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_unknown_version_rejected(self, tmp_path):
        rng = np.random.default_rng(19)
        rm, _ = random_instance(rng)
        path = tmp_path / "map.json"
        save_radio_map(rm, str(path))
        doc = json.loads(path.read_text())
        doc["version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(MapFormatError, match="version"):
            load_radio_map(str(path))

    def test_truncated_file_rejected(self, tmp_path):
        rng = np.random.default_rng(23)
        rm, _ = random_instance(rng)
        path = tmp_path / "map.json"
        save_radio_map(rm, str(path))
        data = path.read_text()
        path.write_text(data[: len(data) // 2])
        with pytest.raises(MapFormatError):
            load_radio_map(str(path))

    def test_wrong_kind_rejected(self, tmp_path):
        path = tmp_path / "map.json"
        path.write_text(json.dumps({"version": 1, "kind": "gp_grid"}))
        with pytest.raises(MapFormatError, match="kind"):
            load_radio_map(str(path))

    def test_stripped_map_round_trip(self, tmp_path):
        scans = [scan_at_planar(0, 1.0, 1.0, {"A": 5})]
        rm = build_radio_map(scans, 70.0, origin=ORIGIN, strip_points=True)
        path = tmp_path / "map.json"
        save_radio_map(rm, str(path))
        back = load_radio_map(str(path))
        assert back == rm
        assert not back.has_points
