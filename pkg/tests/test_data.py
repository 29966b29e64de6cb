import numpy as np
import pytest

from mprfrailty import (
    Dataset,
    DataError,
    DivergedIterateError,
    DomainError,
    FrailtySpec,
    StructureError,
    build_design,
    linear_predictors,
)
from mprfrailty.data import expand_random_effects

from .conftest import small_weibull_dataset


def toy_dataset():
    # 2 clusters {A: 2 records, B: 1 record}, 1 covariate
    return Dataset(
        clusters=["A", "A", "B"],
        time=[1.0, 2.0, 0.5],
        status=[1, 0, 1],
        covariates=np.array([[0.1], [0.2], [-0.3]]),
        covariate_names=["age"],
    )


class TestFrailtySpec:
    def test_df_r_by_structure(self):
        assert FrailtySpec("NF").df_r == 0
        assert FrailtySpec("ScF", sigma_beta=1.0).df_r == 1
        assert FrailtySpec("ShF", sigma_alpha=1.0).df_r == 1
        assert FrailtySpec("IF", sigma_beta=1.0, sigma_alpha=1.0).df_r == 2
        assert FrailtySpec("CF", sigma_beta=1.0, phi=2.0).df_r == 2
        assert FrailtySpec("BVNF", sigma_beta=1.0, sigma_alpha=1.0, rho=0.2).df_r == 3

    def test_missing_parameter_rejected(self):
        with pytest.raises(DomainError):
            FrailtySpec("BVNF", sigma_beta=1.0, sigma_alpha=1.0)

    def test_extraneous_parameter_rejected(self):
        with pytest.raises(DomainError):
            FrailtySpec("ScF", sigma_beta=1.0, rho=0.5)

    def test_rho_boundary_rejected(self):
        with pytest.raises(DomainError):
            FrailtySpec("BVNF", sigma_beta=1.0, sigma_alpha=1.0, rho=1.0)

    def test_nonpositive_sigma_rejected(self):
        with pytest.raises(DomainError):
            FrailtySpec("ScF", sigma_beta=0.0)

    def test_with_dispersion(self):
        spec = FrailtySpec("IF", sigma_beta=1.0, sigma_alpha=1.0)
        spec2 = spec.with_dispersion((2.0, 0.5))
        assert spec2.sigma_beta == 2.0 and spec2.sigma_alpha == 0.5


class TestSurvivalRecord:
    def test_valid_record(self):
        from mprfrailty import SurvivalRecord

        r = SurvivalRecord(cluster="A", time=1.5, status=1, covariates=(0.2,))
        assert r.time == 1.5

    def test_invalid_records(self):
        from mprfrailty import SurvivalRecord

        with pytest.raises(DataError):
            SurvivalRecord(cluster="A", time=0.0, status=1, covariates=())
        with pytest.raises(DataError):
            SurvivalRecord(cluster="A", time=1.0, status=2, covariates=())

    def test_from_records_round_trip(self):
        from mprfrailty import SurvivalRecord

        records = [
            SurvivalRecord("A", 1.0, 1, (0.1,)),
            SurvivalRecord("A", 2.0, 0, (0.2,)),
            SurvivalRecord("B", 0.5, 1, (-0.3,)),
        ]
        ds = Dataset.from_records(records, ["age"])
        assert ds.n == 3
        assert ds.cluster_labels() == ["A", "B"]
        assert ds.covariates[:, 0].tolist() == [0.1, 0.2, -0.3]


class TestDataset:
    def test_rejects_zero_time(self):
        with pytest.raises(DataError):
            Dataset(["A"], [0.0], [1], np.zeros((1, 1)), ["x"])

    def test_rejects_bad_status(self):
        with pytest.raises(DataError):
            Dataset(["A"], [1.0], [2], np.zeros((1, 1)), ["x"])

    def test_rejects_empty(self):
        with pytest.raises(DataError):
            Dataset([], [], [], np.zeros((0, 1)), ["x"])

    def test_cluster_labels_first_appearance(self):
        ds = Dataset(["B", "A", "B"], [1, 1, 1], [1, 1, 1], np.zeros((3, 0)), [])
        assert ds.cluster_labels() == ["B", "A"]


class TestReadCsv(object):
    def _write(self, tmp_path, text):
        path = tmp_path / "data.csv"
        path.write_text(text)
        return path

    def test_round_trip(self, tmp_path):
        path = self._write(
            tmp_path, "cluster,time,status,age\nA,1.0,1,0.1\nA,2.0,0,0.2\nB,0.5,1,-0.3\n"
        )
        ds = Dataset.read_csv(path)
        assert ds.n == 3
        assert ds.covariate_names == ["age"]
        assert ds.cluster_labels() == ["A", "B"]

    def test_bad_status_reports_row(self, tmp_path):
        path = self._write(tmp_path, "cluster,time,status,age\nA,1.0,1,0.1\nA,2.0,2,0.2\n")
        with pytest.raises(DataError) as err:
            Dataset.read_csv(path)
        assert err.value.row == 2
        assert "status" in str(err.value)

    def test_nonpositive_time_reports_row(self, tmp_path):
        path = self._write(tmp_path, "cluster,time,status\nA,-1.0,1\n")
        with pytest.raises(DataError) as err:
            Dataset.read_csv(path)
        assert err.value.row == 1

    def test_missing_header(self, tmp_path):
        path = self._write(tmp_path, "A,1.0,1\n")
        with pytest.raises(DataError):
            Dataset.read_csv(path)

    def test_empty_file(self, tmp_path):
        path = self._write(tmp_path, "")
        with pytest.raises(DataError):
            Dataset.read_csv(path)


class TestBuildDesign:
    def test_incidence_matrix(self):
        design = build_design(toy_dataset())
        assert design.Z.tolist() == [[1, 0], [1, 0], [0, 1]]
        assert design.cluster_sizes.tolist() == [2, 1]

    def test_intercept_prepended(self):
        ds = small_weibull_dataset(p=2)
        design = build_design(ds)
        assert design.m_beta == 3
        assert np.all(design.X_beta[:, 0] == 1.0)

    def test_column_sums_equal_cluster_sizes(self):
        ds = small_weibull_dataset(q=4, n_i=3)
        design = build_design(ds)
        assert np.all(design.Z.sum(axis=0) == design.cluster_sizes)

    def test_separate_covariate_lists(self):
        ds = small_weibull_dataset(p=2)
        design = build_design(ds, scale_covariates=["x1"], shape_covariates=["x1", "x2"])
        assert design.scale_names == ["(Intercept)", "x1"]
        assert design.shape_names == ["(Intercept)", "x1", "x2"]

    def test_unknown_covariate(self):
        with pytest.raises(DataError):
            build_design(toy_dataset(), scale_covariates=["weight"])

    def test_single_cluster_warns(self):
        ds = Dataset(["A", "A"], [1.0, 2.0], [1, 0], np.zeros((2, 0)), [])
        with pytest.warns(UserWarning, match="single cluster"):
            build_design(ds)

    def test_order_stable(self):
        ds = small_weibull_dataset()
        d1 = build_design(ds)
        d2 = build_design(ds)
        assert d1.cluster_labels == d2.cluster_labels
        assert np.array_equal(d1.X_beta, d2.X_beta)
        assert np.array_equal(d1.cluster_index, d2.cluster_index)

    def test_lung_shaped_input(self):
        rng = np.random.default_rng(0)
        n, q, p = 579, 31, 5
        idx = rng.integers(0, q, size=n)
        idx[:q] = np.arange(q)  # every institution appears
        ds = Dataset(
            [f"inst{i}" for i in idx],
            rng.uniform(0.1, 5.0, n),
            rng.integers(0, 2, n),
            rng.integers(0, 2, (n, p)).astype(float),
            [f"b{j}" for j in range(p)],
        )
        design = build_design(ds)
        assert design.X_beta.shape == (579, 6)
        assert design.Z.shape == (579, 31)


class TestLinearPredictors:
    def test_zero_parameters(self):
        design = build_design(toy_dataset())
        tau, gamma = linear_predictors(design, np.zeros(2), np.zeros(2))
        assert np.all(tau == 1.0) and np.all(gamma == 1.0)

    def test_intercept_only(self):
        design = build_design(toy_dataset())
        tau, _ = linear_predictors(design, np.array([1.0, 0.0]), np.zeros(2))
        assert tau == pytest.approx(np.full(3, np.e))

    def test_matches_rowwise_oracle(self):
        ds = small_weibull_dataset(seed=9, q=2, n_i=3, p=2)
        design = build_design(ds)
        rng = np.random.default_rng(1)
        beta = rng.uniform(-0.5, 0.5, 3)
        alpha = rng.uniform(-0.5, 0.5, 3)
        vb = rng.uniform(-0.5, 0.5, 2)
        va = rng.uniform(-0.5, 0.5, 2)
        tau, gamma = linear_predictors(design, beta, alpha, vb, va)
        for i in range(ds.n):
            k = design.cluster_index[i]
            assert tau[i] == pytest.approx(
                np.exp(design.X_beta[i] @ beta + vb[k]), rel=1e-14
            )
            assert gamma[i] == pytest.approx(
                np.exp(design.X_alpha[i] @ alpha + va[k]), rel=1e-14
            )

    def test_intercept_equivariance(self):
        design = build_design(toy_dataset())
        beta = np.array([0.2, 0.4])
        alpha = np.array([-0.1, 0.3])
        tau1, gamma1 = linear_predictors(design, beta, alpha)
        tau2, gamma2 = linear_predictors(design, beta + np.array([0.7, 0.0]), alpha)
        assert tau2 == pytest.approx(np.exp(0.7) * tau1)
        assert gamma2 == pytest.approx(gamma1)

    def test_overflow_raises_diverged(self):
        design = build_design(toy_dataset())
        with pytest.raises(DivergedIterateError):
            linear_predictors(design, np.array([800.0, 0.0]), np.zeros(2))


class TestExpandRandomEffects:
    def test_cf_derives_shape(self):
        spec = FrailtySpec("CF", sigma_beta=1.0, phi=2.0)
        vb, va = expand_random_effects(spec, 3, np.array([0.1, -0.2, 0.3]))
        assert va == pytest.approx(2.0 * vb)

    def test_absent_component_must_be_zero(self):
        spec = FrailtySpec("ScF", sigma_beta=1.0)
        with pytest.raises(StructureError):
            expand_random_effects(spec, 2, None, np.array([0.1, 0.0]))
