"""CSV ingestion, exporters, and config parsing."""

import json
import math

import numpy as np
import pytest

from _recipes import BUDGET
from skyfade.correlation import (
    AngularProfile,
    Correlogram,
    serialize_model,
)
from skyfade.dataio import (
    ANNOTATION_COLUMNS,
    CANONICAL_COLUMNS,
    _median_filter,
    bins_from_config,
    budget_from_config,
    eval_from_config,
    ingest_csv,
    load_config,
    load_targets_csv,
    sim_from_config,
    write_correlogram_csv,
    write_coverage_report,
    write_dataset_csv,
    write_geometry_csv,
    write_predictions_csv,
    write_profile_csv,
    write_summary_json,
    write_trials_csv,
)
from skyfade.errors import IngestError, SchemaError, ValidationError
from skyfade.evaluation import EvalConfig, EvalResult, TrialRecord
from skyfade.fieldsim import synthesize_dataset
from skyfade.kriging import Prediction
from test_fieldsim import small_config

HEADER = ",".join(CANONICAL_COLUMNS)


def good_row(time=0.0, alt=30.0, rsrp=-75.0, lat=35.7205, lon=-78.699):
    return f"{time},{lat},{lon},{alt},10.0,1.0,-1.0,{rsrp}"


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestIngest:
    def test_round_trip_is_exact(self, tmp_path):
        rows = synthesize_dataset(small_config(seed=13, n=40))
        path = tmp_path / "dataset.csv"
        write_dataset_csv(path, rows)
        ingest = ingest_csv(path, BUDGET)
        assert ingest.measurements == rows
        assert ingest.skipped == []
        assert ingest.n_rows == 40
        for row, sf in zip(rows, ingest.samples):
            assert sf.pl_est_dbm + sf.sf_db == pytest.approx(row.rsrp_dbm, abs=1e-12)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(SchemaError):
            ingest_csv(path, BUDGET)

    def test_header_only_rejected(self, tmp_path):
        path = write_lines(tmp_path / "h.csv", [HEADER])
        with pytest.raises(SchemaError) as err:
            ingest_csv(path, BUDGET)
        assert "no data rows" in str(err.value)

    def test_missing_column_named(self, tmp_path):
        header = ",".join(c for c in CANONICAL_COLUMNS if c != "pitch_deg")
        path = write_lines(
            tmp_path / "m.csv", [header, "0,35.7205,-78.699,30,10,-1,-75"]
        )
        with pytest.raises(SchemaError) as err:
            ingest_csv(path, BUDGET)
        assert "pitch_deg" in str(err.value)

    def test_bad_rows_skipped_with_line_numbers(self, tmp_path):
        lines = [HEADER] + [good_row(time=float(i)) for i in range(20)]
        lines.insert(5, "4.5,35.7205,-78.699,not_a_number,10,1,-1,-75")
        path = write_lines(tmp_path / "skip.csv", lines)
        ingest = ingest_csv(path, BUDGET)
        assert ingest.n_rows == 21
        assert len(ingest.samples) == 20
        assert ingest.skipped == [(6, "non-numeric or missing value")]

    def test_non_finite_row_skipped(self, tmp_path):
        lines = [HEADER] + [good_row(time=float(i)) for i in range(15)]
        lines.append("99,35.7205,-78.699,nan,10,1,-1,-75")
        path = write_lines(tmp_path / "nan.csv", lines)
        ingest = ingest_csv(path, BUDGET)
        assert ingest.skipped == [(17, "non-finite value")]

    def test_invalid_pose_row_skipped(self, tmp_path):
        lines = [HEADER] + [good_row(time=float(i)) for i in range(15)]
        lines.append("99,95.0,-78.699,30,10,1,-1,-75")  # latitude out of range
        path = write_lines(tmp_path / "pose.csv", lines)
        ingest = ingest_csv(path, BUDGET)
        assert len(ingest.skipped) == 1
        assert ingest.skipped[0][0] == 17

    def test_too_many_bad_rows_abort(self, tmp_path):
        lines = [HEADER, good_row(), good_row(time=1.0), "x,x,x,x,x,x,x,x"]
        path = write_lines(tmp_path / "bad.csv", lines)
        with pytest.raises(IngestError) as err:
            ingest_csv(path, BUDGET)
        assert err.value.bad_rows[0][0] == 4

    def test_column_map_renames_headers(self, tmp_path):
        header = "t,latitude,longitude,alt_m,yaw_deg,pitch_deg,roll_deg,power"
        path = write_lines(
            tmp_path / "ext.csv", [header, "0,35.7205,-78.699,30,10,1,-1,-75"]
        )
        ingest = ingest_csv(
            path,
            BUDGET,
            column_map={
                "time_s": "t",
                "lat_deg": "latitude",
                "lon_deg": "longitude",
                "rsrp_dbm": "power",
            },
        )
        assert len(ingest.samples) == 1
        assert ingest.measurements[0].rsrp_dbm == -75.0

    def test_unknown_canonical_name_in_map(self, tmp_path):
        path = write_lines(tmp_path / "x.csv", [HEADER, good_row()])
        with pytest.raises(SchemaError):
            ingest_csv(path, BUDGET, column_map={"signal": "rsrp_dbm"})

    def test_extra_columns_passed_through(self, tmp_path):
        path = write_lines(
            tmp_path / "extra.csv",
            [HEADER + ",site", good_row() + ",LW1", good_row(time=1.0) + ",LW2"],
        )
        ingest = ingest_csv(path, BUDGET)
        assert ingest.extra_columns == ["site"]
        assert [p["site"] for p in ingest.passthrough] == ["LW1", "LW2"]


class TestMedianFilter:
    def test_hand_oracle(self):
        out = _median_filter(np.array([5.0, 1.0, 4.0, 2.0, 8.0]), 3)
        assert out.tolist() == [3.0, 4.0, 2.0, 4.0, 5.0]

    def test_window_one_is_identity(self):
        values = np.array([3.0, 1.0, 2.0])
        assert _median_filter(values, 1) is values

    def test_even_window_rejected(self):
        with pytest.raises(ValidationError):
            _median_filter(np.array([1.0, 2.0]), 4)

    def test_applied_before_decomposition(self, tmp_path):
        lines = [HEADER]
        for i, rsrp in enumerate((0.0, 10.0, 0.0)):
            lines.append(good_row(time=float(i), rsrp=rsrp))
        path = write_lines(tmp_path / "f.csv", lines)
        ingest = ingest_csv(path, BUDGET, median_window=3)
        assert [m.rsrp_dbm for m in ingest.measurements] == [5.0, 0.0, 5.0]
        raw = ingest_csv(path, BUDGET)
        assert ingest.samples[0].sf_db == raw.samples[0].sf_db + 5.0


class TestTargets:
    def test_rsrp_column_optional(self, tmp_path):
        header = ",".join(c for c in CANONICAL_COLUMNS if c != "rsrp_dbm")
        path = write_lines(
            tmp_path / "t.csv", [header, "0,35.7205,-78.699,30,10,1,-1"]
        )
        geoms, meas = load_targets_csv(path, BUDGET)
        assert len(geoms) == 1
        assert meas[0].rsrp_dbm == 0.0
        assert geoms[0].d2d_m > 0.0

    def test_rsrp_parsed_when_present(self, tmp_path):
        path = write_lines(tmp_path / "t.csv", [HEADER, good_row(rsrp=-64.5)])
        _, meas = load_targets_csv(path, BUDGET)
        assert meas[0].rsrp_dbm == -64.5

    def test_bad_value_names_line(self, tmp_path):
        path = write_lines(
            tmp_path / "t.csv",
            [HEADER, good_row(), "1,35.7205,-78.699,thirty,10,1,-1,-75"],
        )
        with pytest.raises(IngestError) as err:
            load_targets_csv(path, BUDGET)
        assert "line 3" in str(err.value)

    def test_missing_pose_column(self, tmp_path):
        path = write_lines(tmp_path / "t.csv", ["time_s,lat_deg", "0,35.72"])
        with pytest.raises(SchemaError) as err:
            load_targets_csv(path, BUDGET)
        assert "lon_deg" in str(err.value)


class TestWriters:
    def test_geometry_csv_layout_and_idempotence(self, tmp_path):
        path = write_lines(
            tmp_path / "in.csv",
            [HEADER + ",site", good_row() + ",LW1", good_row(time=1.0) + ",LW1"],
        )
        out1 = tmp_path / "out1.csv"
        write_geometry_csv(out1, ingest_csv(path, BUDGET))
        header = out1.read_text().splitlines()[0].split(",")
        assert header == list(CANONICAL_COLUMNS) + ["site"] + list(ANNOTATION_COLUMNS)
        out2 = tmp_path / "out2.csv"
        write_geometry_csv(out2, ingest_csv(out1, BUDGET))
        assert out2.read_bytes() == out1.read_bytes()

    def test_profile_csv(self, tmp_path):
        rho = np.full((1, 2, 2), np.nan)
        rho[0, 0, 0] = 1.0
        rho[0, 0, 1] = rho[0, 1, 0] = 0.5
        profile = AngularProfile(rho=rho, counts=np.array([[40, 35]]))
        path = tmp_path / "profile.csv"
        write_profile_csv(path, profile, "elev", "tilt", [20.0], [-5.0, 5.0])
        lines = path.read_text().splitlines()
        assert lines[0] == "elev_rep_deg,tilt_rep_i_deg,tilt_rep_j_deg,rho,count_i,count_j"
        assert lines[1] == "20.0,-5.0,-5.0,1.0,40,40"
        assert lines[2] == "20.0,-5.0,5.0,0.5,40,35"
        assert lines[4].endswith(",,35,35")  # NaN diagonal under min-count

    def test_correlogram_csv(self, tmp_path):
        gram = Correlogram(
            lag_m=np.array([5.0, np.nan]),
            rho=np.array([0.25, np.nan]),
            counts=np.array([12, 0]),
        )
        path = tmp_path / "gram.csv"
        write_correlogram_csv(path, gram)
        lines = path.read_text().splitlines()
        assert lines == ["lag_m,rho,count", "5.0,0.25,12", ",,0"]

    def test_predictions_csv(self, tmp_path):
        path = tmp_path / "pred.csv"
        write_predictions_csv(
            path,
            [
                Prediction(
                    w_hat_db=1.5, z_hat_dbm=-70.25, variance_db2=0.75, nugget_used=0.0
                )
            ],
        )
        lines = path.read_text().splitlines()
        assert lines[0] == "w_hat_db,z_hat_dbm,kriging_var_db2,nugget_used"
        assert lines[1] == "1.5,-70.25,0.75,0.0"

    def test_trials_csv(self, tmp_path):
        config = EvalConfig(m_values=(5,), tests_per_trial=2, total_test_predictions=2)
        result = EvalResult(config=config)
        result.trials.append(
            TrialRecord(m=5, mode="baseline", trial=0, rmse_db=3.5, nugget_used=1e-06)
        )
        path = tmp_path / "trials.csv"
        write_trials_csv(path, result)
        lines = path.read_text().splitlines()
        assert lines[0] == "m,mode,trial,rmse_db,nugget_used"
        assert lines[1] == "5,baseline,0,3.5,1e-06"

    def test_summary_json(self, tmp_path):
        config = EvalConfig(m_values=(5,), tests_per_trial=2, total_test_predictions=2)
        result = EvalResult(config=config)
        result.trials.append(
            TrialRecord(m=5, mode="baseline", trial=0, rmse_db=3.5, nugget_used=0.0)
        )
        path = tmp_path / "summary.json"
        write_summary_json(path, result)
        doc = json.loads(path.read_text())
        assert doc["results"][0]["median_rmse_db"] == 3.5

    def test_coverage_report(self, tmp_path):
        class FakeFit:
            excluded_cells = [{"elev_bin": 0, "tilt_bin": 1, "count": 3, "min_count": 30}]
            warnings = ["tilt: conditioning bin 2 has no usable pairs"]

        path = tmp_path / "coverage.json"
        write_coverage_report(path, FakeFit(), ingest_skipped=[(7, "bad row")])
        doc = json.loads(path.read_text())
        assert doc["excluded_cells"][0]["count"] == 3
        assert doc["warnings"] == FakeFit.warnings
        assert doc["skipped_rows"] == [{"line": 7, "reason": "bad row"}]


class TestConfigs:
    def test_budget_full_section(self, tmp_path):
        gain = tmp_path / "gain.csv"
        gain.write_text("angle_deg,gain_dbi\n-90,-3\n90,3\n")
        doc = {
            "budget": {
                "tx_lat_deg": 35.72,
                "tx_lon_deg": -78.70,
                "antenna_height_m": 2.0,
                "tx_power_dbm": 27.0,
                "freq_hz": 3.5e9,
                "reflection": [-0.8, 0.1],
                "gain_tx_csv": "gain.csv",
            }
        }
        budget = budget_from_config(doc, base_dir=tmp_path)
        assert budget.antenna_height_m == 2.0
        assert budget.reflection == complex(-0.8, 0.1)
        assert budget.gain_tx.lookup(90.0) == 3.0
        assert budget.gain_uav.lookup(0.0) == 0.0

    def test_budget_scalar_reflection(self):
        doc = {"budget": {"tx_lat_deg": 1.0, "tx_lon_deg": 2.0, "reflection": -0.9}}
        assert budget_from_config(doc).reflection == complex(-0.9, 0.0)

    def test_budget_requires_transmitter_position(self):
        with pytest.raises(SchemaError) as err:
            budget_from_config({"budget": {"tx_lat_deg": 1.0}})
        assert err.value.field == "budget"

    def test_bins_default_and_custom(self):
        assert bins_from_config({}) == bins_from_config({"bins": {}})
        custom = bins_from_config(
            {
                "bins": {
                    "elev_edges": [0, 45, 90],
                    "elev_reps": [20, 70],
                }
            }
        )
        assert custom.n_elev == 2
        assert custom.elev_reps == (20.0, 70.0)

    def test_sim_inline_truth(self):
        from skyfade import CorrelationModel, DedmParams

        truth_doc = serialize_model(
            CorrelationModel.with_uniform_kernels(
                0.0, 4.0, DedmParams(0.5, 0.01, 0.001)
            )
        )
        doc = {
            "sim": {
                "truth": truth_doc,
                "seed": 9,
                "n_samples": 55,
                "flight": {"altitude_m": 40.0, "n_passes": 4},
                "noise_std_db": 0.5,
            }
        }
        config = sim_from_config(doc, BUDGET)
        assert config.seed == 9
        assert config.n_samples == 55
        assert config.flight.altitude_m == 40.0
        assert config.flight.n_passes == 4
        assert config.noise_std_db == 0.5

    def test_sim_truth_path_relative(self, tmp_path):
        from skyfade import CorrelationModel, DedmParams
        from skyfade.correlation import save_model

        model = CorrelationModel.with_uniform_kernels(
            0.0, 4.0, DedmParams(0.5, 0.01, 0.001)
        )
        save_model(model, tmp_path / "truth.json")
        doc = {"sim": {"truth_path": "truth.json"}}
        config = sim_from_config(doc, BUDGET, base_dir=tmp_path)
        assert config.truth.sigma2 == 4.0
        assert config.seed == 0
        assert config.n_samples == 1000

    def test_sim_missing_section(self):
        with pytest.raises(SchemaError) as err:
            sim_from_config({}, BUDGET)
        assert err.value.field == "sim"

    def test_sim_missing_truth(self):
        with pytest.raises(SchemaError) as err:
            sim_from_config({"sim": {"seed": 1}}, BUDGET)
        assert err.value.field == "sim.truth"

    def test_eval_section(self):
        config = eval_from_config(
            {
                "eval": {
                    "m_values": [10, 20],
                    "tests_per_trial": 5,
                    "total_test_predictions": 50,
                    "seed": 3,
                    "modes": ["baseline"],
                }
            }
        )
        assert config.m_values == (10, 20)
        assert config.n_trials == 10
        assert config.modes == ("baseline",)
        assert eval_from_config({}) == EvalConfig()

    def test_load_config_rejects_bad_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("[1, 2]")
        with pytest.raises(SchemaError):
            load_config(path)
        path.write_text("{broken")
        with pytest.raises(SchemaError):
            load_config(path)
