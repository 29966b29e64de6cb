import numpy as np
import pytest

from mprfrailty import (
    MIXTURE_CHI2_CRITICAL_5PCT,
    InconsistentFitsError,
    ModelFit,
    caic,
    fit,
    frailty_lrt,
    raic,
    selection_report,
)

from .conftest import small_weibull_dataset


def stub_fit(structure, deviance_profile, df_r, cond_deviance=0.0, df_c=0.0):
    """A ModelFit carrying only what the selection functions read."""
    return ModelFit(
        family="weibull", structure=structure,
        scale_names=["(Intercept)"], shape_names=["(Intercept)"],
        beta=np.zeros(1), alpha=np.zeros(1),
        se_beta=np.zeros(1), se_alpha=np.zeros(1),
        v_beta=np.zeros(1), v_alpha=np.zeros(1),
        se_v_beta=None, se_v_alpha=None,
        dispersion={}, se_dispersion={},
        deviance_profile=deviance_profile, cond_deviance=cond_deviance,
        df_r=df_r, df_c=df_c, converged=True,
        iterations={"outer": 1, "inner_total": 1},
        cluster_labels=["c0"], cluster_sizes=np.array([1]),
        cov_theta=np.eye(2), modal_covariates={}, binary_covariates={},
    )


class TestRaic:
    def test_lung_table_values(self):
        nf = stub_fit("NF", 1123.40, 0)
        shf = stub_fit("ShF", 1079.52, 1)
        assert raic(nf) == pytest.approx(1123.40)
        assert raic(shf) == pytest.approx(1081.52)
        assert raic(nf) - raic(shf) == pytest.approx(41.88, abs=1e-9)

    def test_equal_deviance_ordered_by_df_r(self):
        a = stub_fit("ScF", 1000.0, 1)
        b = stub_fit("IF", 1000.0, 2)
        assert raic(a) < raic(b)


class TestCaic:
    def test_nf_is_classical_aic(self):
        ds = small_weibull_dataset()
        f = fit(ds, structure="NF")
        m = len(f.beta) + len(f.alpha)
        assert f.df_c == pytest.approx(m, abs=1e-9)
        assert caic(f) == pytest.approx(f.cond_deviance + 2 * m, abs=1e-9)

    def test_lung_shf_value(self):
        shf = stub_fit("ShF", 0.0, 1, cond_deviance=1000.0, df_c=30.89)
        assert caic(shf) == pytest.approx(1061.78)

    def test_df_c_bounds_on_fits(self):
        ds = small_weibull_dataset(seed=17, q=4, n_i=8)
        for structure in ("ScF", "ShF", "IF", "CF", "BVNF"):
            f = fit(ds, structure=structure)
            m = len(f.beta) + len(f.alpha)
            v_dim = len(f.cluster_labels) * (2 if structure in ("IF", "BVNF") else 1)
            assert m - 1e-9 <= f.df_c <= m + v_dim + 1e-9


class TestFrailtyLrt:
    def test_lung_nf_vs_shf(self):
        res = frailty_lrt(stub_fit("NF", 1123.40, 0), stub_fit("ShF", 1079.52, 1))
        assert res.statistic == pytest.approx(43.88, abs=1e-9)
        assert res.critical_value == pytest.approx(2.705543)
        assert res.significant

    def test_bladder_nf_vs_scf(self):
        res = frailty_lrt(stub_fit("NF", 946.96, 0), stub_fit("ScF", 943.28, 1))
        assert res.statistic == pytest.approx(3.68, abs=1e-9)
        assert res.significant

    def test_identical_fits_not_significant(self):
        res = frailty_lrt(stub_fit("NF", 500.0, 0), stub_fit("ScF", 500.0, 1))
        assert res.statistic == 0.0
        assert res.p_value == 0.5
        assert not res.significant

    def test_negative_statistic_raises(self):
        with pytest.raises(InconsistentFitsError):
            frailty_lrt(stub_fit("NF", 500.0, 0), stub_fit("ScF", 501.0, 1))

    def test_tiny_negative_clamped(self):
        res = frailty_lrt(stub_fit("NF", 500.0, 0), stub_fit("ScF", 500.0 + 5e-7, 1))
        assert res.statistic == 0.0

    def test_non_nested_pair_rejected(self):
        with pytest.raises(ValueError):
            frailty_lrt(stub_fit("NF", 500.0, 0), stub_fit("BVNF", 490.0, 3))

    def test_critical_value_is_half_mixture_quantile(self):
        from scipy.stats import chi2

        # P(mixture > c) = 0.5 P(chi2_1 > c) = 0.05 at the critical value
        assert 0.5 * chi2.sf(MIXTURE_CHI2_CRITICAL_5PCT, 1) == pytest.approx(
            0.05, abs=1e-6
        )


class TestSelectionReport:
    def test_deltas_and_best(self):
        fits = [
            stub_fit("NF", 1123.40, 0, cond_deviance=1099.40, df_c=12.0),
            stub_fit("ShF", 1079.52, 1, cond_deviance=1015.0, df_c=30.89),
            stub_fit("ScF", 1121.35, 1, cond_deviance=1097.0, df_c=19.89),
        ]
        report = selection_report(fits)
        assert report.best_raic() == "ShF"
        deltas = {r.model: r.delta_raic for r in report.rows}
        assert deltas["ShF"] == 0.0
        assert deltas["NF"] == pytest.approx(41.88, abs=1e-9)
        assert all(r.delta_raic >= 0 for r in report.rows)
        assert all(r.delta_caic >= 0 for r in report.rows)
        assert sum(1 for r in report.rows if r.delta_raic == 0.0) == 1
        assert sum(1 for r in report.rows if r.delta_caic == 0.0) == 1

    def test_csv_rows_shape(self):
        report = selection_report([stub_fit("NF", 100.0, 0)])
        rows = report.to_csv_rows()
        assert rows[0] == [
            "model", "deviance_r", "df_r", "raic", "delta_raic",
            "deviance_c", "df_c", "caic", "delta_caic",
        ]
        assert len(rows) == 2

    def test_text_marks_best_and_failures(self):
        report = selection_report(
            [stub_fit("NF", 100.0, 0), stub_fit("ScF", 90.0, 1)],
            failures={"BVNF": "boom"},
        )
        text = report.to_text()
        assert "<rAIC" in text
        assert "BVNF" in text and "boom" in text

    def test_nested_deviance_ordering_on_real_fits(self):
        ds = small_weibull_dataset(seed=2, q=5, n_i=10)
        f_nf = fit(ds, structure="NF")
        f_scf = fit(ds, structure="ScF")
        f_if = fit(ds, structure="IF")
        assert f_scf.deviance_profile <= f_nf.deviance_profile + 1e-6
        assert f_if.deviance_profile <= f_scf.deviance_profile + 1e-4
