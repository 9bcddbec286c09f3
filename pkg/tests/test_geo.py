import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsmloc.geo import (
    EARTH_RADIUS_M,
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


class TestAsuConversion:
    @pytest.mark.parametrize("asu,dbm", [(0, -113.0), (10, -93.0), (31, -51.0)])
    def test_known_values(self, asu, dbm):
        assert asu_to_dbm(asu) == dbm

    def test_full_table(self):
        for asu in range(32):
            assert asu_to_dbm(asu) == 2 * asu - 113

    @pytest.mark.parametrize("bad", [-1, 32, 100])
    def test_out_of_range(self, bad):
        with pytest.raises(ValueError):
            asu_to_dbm(bad)

    @pytest.mark.parametrize("dbm,asu", [(-113.0, 0), (-51.0, 31), (-200.0, 0), (50.0, 31)])
    def test_quantizer(self, dbm, asu):
        assert dbm_to_asu(dbm) == asu

    def test_round_half_away_from_zero(self):
        # -112 dBm sits exactly halfway between ASU 0 and 1
        assert dbm_to_asu(-112.0) == 1
        assert dbm_to_asu(-112.1) == 0

    @given(st.integers(min_value=0, max_value=31))
    def test_exact_inverse_on_integer_range(self, asu):
        assert dbm_to_asu(asu_to_dbm(asu)) == asu


class TestProjection:
    def test_identity_at_origin(self, origin):
        assert project(origin, origin) == PlanarPoint(0.0, 0.0)

    def test_one_millidegree_north(self, origin):
        p = project(origin, GeoPoint(origin.lat + 0.001, origin.lon))
        expected = EARTH_RADIUS_M * math.radians(0.001)  # 111.1949266 m
        assert p.x == pytest.approx(0.0, abs=1e-9)
        assert p.y == pytest.approx(expected, abs=1e-6)
        assert expected == pytest.approx(111.19, abs=0.01)

    @settings(max_examples=300)
    @given(
        st.floats(min_value=-7000, max_value=7000),
        st.floats(min_value=-7000, max_value=7000),
    )
    def test_round_trip_within_10km(self, x, y):
        origin = GeoPoint(30.0, 31.0)
        geo = unproject(origin, PlanarPoint(x, y))
        back = project(origin, geo)
        assert math.hypot(back.x - x, back.y - y) < 0.1

    def test_range_warning(self, origin):
        with pytest.warns(ProjectionRangeWarning):
            project(origin, GeoPoint(origin.lat + 0.2, origin.lon))

    def test_geopoint_validation(self):
        with pytest.raises(ValueError):
            GeoPoint(91.0, 0.0)
        with pytest.raises(ValueError):
            GeoPoint(0.0, 181.0)


class TestScanTypes:
    def test_scan_row_rejects_empty_tower(self):
        with pytest.raises(ValueError):
            ScanRow(0.0, "", 10)

    def test_scan_row_rejects_bad_asu(self):
        with pytest.raises(ValueError):
            ScanRow(0.0, "A", 32)

    def test_scan_vector_rejects_eight_readings(self):
        with pytest.raises(ValueError):
            ScanVector(0.0, {f"T{i}": 5 for i in range(8)})

    def test_scan_vector_rejects_empty(self):
        with pytest.raises(ValueError):
            ScanVector(0.0, {})


class TestGrouping:
    def test_three_rows_one_scan(self):
        rows = [ScanRow(5.0, t, 10) for t in ("A", "B", "C")]
        scans = group_rows_into_scans(rows)
        assert len(scans) == 1
        assert scans[0].readings == {"A": 10, "B": 10, "C": 10}

    def test_two_timestamps_two_scans(self):
        rows = [ScanRow(5.0, "A", 10), ScanRow(6.0, "A", 11)]
        scans = group_rows_into_scans(rows)
        assert [s.timestamp for s in scans] == [5.0, 6.0]

    def test_duplicate_tower_last_wins(self):
        rows = [ScanRow(5.0, f"T{i}", 10) for i in range(7)]
        rows.append(ScanRow(5.0, "T3", 25))  # 8 rows, one duplicated tower
        scans = group_rows_into_scans(rows)
        assert len(scans) == 1
        assert len(scans[0].readings) == 7
        assert scans[0].readings["T3"] == 25

    def test_unsorted_rows_rejected(self):
        rows = [ScanRow(6.0, "A", 10), ScanRow(5.0, "A", 10)]
        with pytest.raises(ValueError, match="sorted"):
            group_rows_into_scans(rows)

    def test_never_more_than_seven_readings(self):
        rows = [ScanRow(1.0, f"T{i}", 3) for i in range(7)]
        for scan in group_rows_into_scans(rows):
            assert 1 <= len(scan.readings) <= 7
            assert len(set(scan.readings)) == len(scan.readings)

    def test_empty_input(self):
        assert group_rows_into_scans([]) == []


class TestTraceFiles:
    def test_round_trip_with_truth(self, tmp_path, origin):
        scans = [
            ScanVector(0.0, {"B": 3, "A": 17}, truth=GeoPoint(30.001, 31.002)),
            ScanVector(1.0, {"A": 18}, truth=GeoPoint(30.0011, 31.0021)),
        ]
        path = tmp_path / "trace.csv"
        write_trace(scans, str(path))
        assert read_trace(str(path)) == scans

    def test_round_trip_without_truth(self, tmp_path):
        scans = [ScanVector(3.5, {"A": 9})]
        path = tmp_path / "trace.csv"
        write_trace(scans, str(path))
        back = read_trace(str(path))
        assert back == scans
        assert back[0].truth is None

    def test_header_checked(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,lat,lon,cell,asu\n1,,,,5\n")
        with pytest.raises(TraceFormatError):
            read_trace_rows(str(path))

    def test_bad_field_reported_with_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("timestamp,lat,lon,tower_id,asu\n1.0,,,A,notanumber\n")
        with pytest.raises(TraceFormatError, match=":2:"):
            read_trace_rows(str(path))

    def test_tower_csv_round_trip(self, tmp_path):
        towers = {"T1": GeoPoint(30.01, 31.01), "T0": GeoPoint(30.0, 31.0)}
        path = tmp_path / "towers.csv"
        write_tower_locations(towers, str(path))
        assert read_tower_locations(str(path)) == towers
