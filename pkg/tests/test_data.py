import numpy as np
import pytest

from causalmiss import (
    ColumnSchema,
    CompletedDataset,
    DataError,
    Dataset,
    load_csv,
    validate_positivity,
    write_completions_csv,
    write_csv,
)


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


SCHEMA = ColumnSchema(exposure="A", outcome="Y", covariates=("X1", "X2"))


class TestLoadCsv:
    def test_missing_pattern_from_empty_cells(self, tmp_path):
        path = write(tmp_path, "A,Y,X1,X2\n1,1,0.5,1\n,0,0.2,0\n0,1,0.1,1\n1,0,0.9,0\n")
        data = load_csv(path, SCHEMA)
        assert data.n == 4
        assert np.array_equal(data.missing_indicator, [0, 1, 0, 0])
        assert np.isnan(data.exposure[1])
        assert np.array_equal(data.exposure[[0, 2, 3]], [1, 0, 1])

    def test_non_binary_exposure_rejected(self, tmp_path):
        path = write(tmp_path, "A,Y,X1,X2\n2,1,0.5,1\n")
        with pytest.raises(DataError, match="non-binary"):
            load_csv(path, SCHEMA)

    def test_missing_covariate_rejected(self, tmp_path):
        path = write(tmp_path, "A,Y,X1,X2\n1,1,,1\n0,0,0.2,0\n")
        with pytest.raises(DataError, match="missing"):
            load_csv(path, SCHEMA)

    def test_missing_outcome_rejected(self, tmp_path):
        path = write(tmp_path, "A,Y,X1,X2\n1,,0.1,1\n")
        with pytest.raises(DataError):
            load_csv(path, SCHEMA)

    def test_unknown_column_rejected(self, tmp_path):
        path = write(tmp_path, "A,Y,X1\n1,1,0.5\n")
        with pytest.raises(DataError, match="X2"):
            load_csv(path, SCHEMA)

    def test_ragged_row_rejected(self, tmp_path):
        path = write(tmp_path, "A,Y,X1,X2\n1,1,0.5\n")
        with pytest.raises(DataError, match="cells"):
            load_csv(path, SCHEMA)

    def test_na_sentinel_configurable(self, tmp_path):
        path = write(tmp_path, "A,Y,X1,X2\nNA,1,0.5,1\n1,0,0.2,0\n")
        schema = ColumnSchema("A", "Y", ("X1", "X2"), missing_tokens=("", "NA"))
        data = load_csv(path, schema)
        assert data.missing_indicator[0] == 1

    def test_two_level_categorical_recoded(self, tmp_path):
        path = write(tmp_path, "A,Y,sex\n1,1,male\n0,0,female\n1,1,female\n")
        data = load_csv(path, ColumnSchema("A", "Y", ("sex",)))
        assert np.array_equal(data.covariates[:, 0], [1.0, 0.0, 0.0])

    def test_multilevel_categorical_rejected(self, tmp_path):
        path = write(tmp_path, "A,Y,city\n1,1,ny\n0,0,la\n1,1,sf\n")
        with pytest.raises(DataError, match="levels"):
            load_csv(path, ColumnSchema("A", "Y", ("city",)))

    def test_continuous_outcome(self, tmp_path):
        path = write(tmp_path, "A,Y,X1\n1,2.5,0.1\n0,-1.25,0.2\n")
        data = load_csv(path, ColumnSchema("A", "Y", ("X1",), outcome_kind="continuous"))
        assert np.allclose(data.outcome, [2.5, -1.25])

    def test_roundtrip_preserves_cells_and_missing_pattern(self, tmp_path):
        path = write(tmp_path, "A,Y,X1,X2\n1,1,0.5,1\n,0,0.25,0\n0,1,-0.125,1\n1,0,0.9,0\n")
        data = load_csv(path, SCHEMA)
        out = tmp_path / "out.csv"
        write_csv(data, out)
        again = load_csv(out, SCHEMA)
        assert np.array_equal(again.missing_indicator, data.missing_indicator)
        obs = data.missing_indicator == 0
        assert np.array_equal(again.exposure[obs], data.exposure[obs])
        assert np.array_equal(again.outcome, data.outcome)
        assert np.array_equal(again.covariates, data.covariates)

    def test_missing_count_matches_indicator_sum(self, tmp_path):
        path = write(tmp_path, "A,Y,X1,X2\n1,1,0.5,1\n,0,0.2,0\n,1,0.1,1\n1,0,0.9,0\n")
        data = load_csv(path, SCHEMA)
        assert data.n_missing == int(data.missing_indicator.sum()) == 2


class TestDatasetValidation:
    def test_indicator_exposure_mismatch_rejected(self):
        with pytest.raises(DataError, match="indicator"):
            Dataset(
                covariates=np.zeros((2, 1)),
                covariate_names=("X1",),
                exposure=np.array([1.0, np.nan]),
                outcome=np.array([0.0, 1.0]),
                missing_indicator=np.array([0, 0]),
            )

    def test_reserved_name_collision_rejected(self):
        with pytest.raises(DataError, match="reserved"):
            Dataset(
                covariates=np.zeros((2, 1)),
                covariate_names=("A_imp",),
                exposure=np.array([1.0, 0.0]),
                outcome=np.array([0.0, 1.0]),
                missing_indicator=np.array([0, 0]),
            )

    def test_completion_must_match_observed_values(self):
        data = Dataset(
            covariates=np.zeros((2, 1)),
            covariate_names=("X1",),
            exposure=np.array([1.0, np.nan]),
            outcome=np.array([0.0, 1.0]),
            missing_indicator=np.array([0, 1]),
        )
        with pytest.raises(DataError, match="disagrees"):
            CompletedDataset(base=data, exposure_imputed=np.array([0.0, 1.0]))
        comp = CompletedDataset(base=data, exposure_imputed=np.array([1.0, 1.0]))
        assert comp.n == 2


class TestPositivity:
    def test_no_violations(self):
        report = validate_positivity([0.3, 0.5, 0.7], eps=0.01)
        assert report.n_violations == 0 and report.ok

    def test_single_violation_indexed(self):
        report = validate_positivity([0.001, 0.5], eps=0.01)
        assert report.violations == (0,)

    def test_matches_direct_scan_on_fitted_values(self):
        rng = np.random.default_rng(11)
        ps = rng.beta(0.5, 0.5, size=500)  # pushes mass toward 0/1
        eps = 0.01
        report = validate_positivity(ps, eps=eps)
        expected = [i for i, v in enumerate(ps) if v < eps or v > 1 - eps]
        assert list(report.violations) == expected
        assert report.n_violations == len(expected)

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            validate_positivity([0.5, np.nan])


def test_write_completions_csv(tmp_path):
    data = Dataset(
        covariates=np.array([[0.5], [0.25]]),
        covariate_names=("X1",),
        exposure=np.array([1.0, np.nan]),
        outcome=np.array([0.0, 1.0]),
        missing_indicator=np.array([0, 1]),
    )
    comps = [
        CompletedDataset(base=data, exposure_imputed=np.array([1.0, a]), imputation_index=j)
        for j, a in ((1, 0.0), (2, 1.0))
    ]
    out = tmp_path / "comps.csv"
    write_completions_csv(comps, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "A,Y,X1,imputation_index"
    assert len(lines) == 5
    assert lines[2].endswith(",1") and lines[4].endswith(",2")
    # parses back through the load layer as a stacked completed dataset
    stacked = load_csv(out, ColumnSchema("A", "Y", ("X1",)))
    assert stacked.n == 4
    assert stacked.n_missing == 0
