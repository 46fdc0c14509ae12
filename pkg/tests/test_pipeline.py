import logging
import math

import numpy as np
import pytest

from rcgbeta import (
    ConfigError,
    CovariateTable,
    FitConfig,
    MethylationMatrix,
    ParseError,
    load_inputs,
    read_results,
    run_sitewise,
    write_results,
)
from rcgbeta.simulate import CovariateSpec, SimSpec, simulate_dataset


def _write(path, text):
    path.write_text(text)
    return path


BETA_CSV = """site_id,s1,s2,s3,s4
cg01,0.10,0.20,0.30,0.40
cg02,0.50,0.60,0.70,0.80
cg03,0.15,0.25,0.35,0.45
"""

COV_CSV = """sample_id,age,group
s1,0.5,0
s2,-0.3,1
s3,1.2,0
s4,0.1,1
"""


@pytest.fixture
def beta_files(tmp_path):
    return (
        _write(tmp_path / "meth.csv", BETA_CSV),
        _write(tmp_path / "cov.csv", COV_CSV),
    )


def _synthetic(n_sites=6, n_samples=80, gamma1=0.6, seed=0):
    spec = SimSpec.from_effects(
        gamma=[0.1, gamma1], zeta_u=[0.0, 0.0], n_samples=n_samples, n_sites=n_sites,
        alpha=2.0, rho=0.4, covariates=(CovariateSpec("standard_normal", name="x1"),),
        seed=seed,
    )
    matrix, covs, _ = simulate_dataset(spec)
    return matrix, covs


class TestLoadInputs:
    def test_beta_shapes(self, beta_files):
        matrix, covs = load_inputs(*beta_files)
        assert matrix.values.shape == (3, 4)
        assert covs.design.shape == (4, 3)
        assert covs.names == ["intercept", "age", "group"]
        assert matrix.sample_ids == covs.sample_ids

    def test_unmatched_sample_dropped_with_warning(self, tmp_path, caplog):
        meth = _write(tmp_path / "m.csv", BETA_CSV)
        cov = _write(
            tmp_path / "c.csv",
            COV_CSV + "s9,0.0,1\n",
        )
        with caplog.at_level(logging.WARNING):
            matrix, covs = load_inputs(meth, cov)
        assert matrix.values.shape == (3, 4)
        assert "dropped 1 covariate" in caplog.text

    def test_missing_covariates_complete_case(self, tmp_path, caplog):
        meth = _write(tmp_path / "m.csv", BETA_CSV)
        cov = _write(tmp_path / "c.csv", COV_CSV.replace("s2,-0.3,1", "s2,,1"))
        with caplog.at_level(logging.WARNING):
            matrix, covs = load_inputs(meth, cov)
        assert covs.design.shape == (3, 3)
        assert matrix.values.shape == (3, 3)
        assert "missing values" in caplog.text

    def test_raw_pair_mode(self, tmp_path):
        m = _write(tmp_path / "chip_M.csv", "site_id,s1,s2\ncg01,300,150\ncg02,80,40\n")
        _write(tmp_path / "chip_U.csv", "site_id,s1,s2\ncg01,100,50\ncg02,20,60\n")
        cov = _write(tmp_path / "cov.csv", "sample_id,x\ns1,0\ns2,1\n")
        matrix, _ = load_inputs(m, cov, mode="raw_pair", offset_a=100.0)
        assert matrix.mode == "raw_intensity"
        assert matrix.offset_a == 100.0
        np.testing.assert_allclose(
            matrix.values,
            [[300 / 500, 150 / 300], [80 / 200, 40 / 200]],
        )

    def test_raw_long_mode(self, tmp_path):
        longf = _write(
            tmp_path / "long.csv",
            "site_id,sample_id,M,U\ncg01,s1,300,100\ncg01,s2,150,50\n"
            "cg02,s1,80,20\ncg02,s2,40,60\n",
        )
        cov = _write(tmp_path / "cov.csv", "sample_id,x\ns1,0\ns2,1\n")
        matrix, _ = load_inputs(longf, cov, mode="raw_long", offset_a=0.0)
        np.testing.assert_allclose(matrix.values, [[0.75, 0.75], [0.8, 0.4]])

    def test_non_numeric_cell_has_line_number(self, tmp_path):
        meth = _write(tmp_path / "m.csv", "site_id,s1\ncg01,0.4\ncg02,oops\n")
        cov = _write(tmp_path / "c.csv", "sample_id,x\ns1,1\n")
        with pytest.raises(ParseError, match="line 3"):
            load_inputs(meth, cov)

    def test_beta_out_of_range_rejected(self, tmp_path):
        meth = _write(tmp_path / "m.csv", "site_id,s1\ncg01,1.4\n")
        cov = _write(tmp_path / "c.csv", "sample_id,x\ns1,1\n")
        with pytest.raises(ParseError, match=r"\[0, 1\]"):
            load_inputs(meth, cov)

    def test_empty_intersection(self, tmp_path):
        meth = _write(tmp_path / "m.csv", BETA_CSV)
        cov = _write(tmp_path / "c.csv", "sample_id,x\nzz,1\n")
        with pytest.raises(ParseError, match="overlapping"):
            load_inputs(meth, cov)

    def test_unknown_mode(self, beta_files):
        with pytest.raises(ConfigError):
            load_inputs(*beta_files, mode="wide")


class TestRunSitewise:
    def test_worker_count_does_not_change_results(self, tmp_path):
        matrix, covs = _synthetic(n_sites=8, n_samples=60)
        cfg = FitConfig(max_iter=800)
        serial = run_sitewise(matrix, covs, "rcg", fit_config=cfg, workers=1)
        parallel = run_sitewise(matrix, covs, "rcg", fit_config=cfg, workers=2)
        p1, p2 = tmp_path / "a.tsv", tmp_path / "b.tsv"
        write_results(serial, p1)
        write_results(parallel, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_per_site_independence(self):
        matrix, covs = _synthetic(n_sites=5, n_samples=50)
        full = run_sitewise(matrix, covs, "mvalue")
        reduced_matrix = MethylationMatrix(
            matrix.site_ids[1:], matrix.sample_ids, matrix.values[1:], matrix.mode
        )
        reduced = run_sitewise(reduced_matrix, covs, "mvalue")
        assert [r.site_id for r in reduced] == matrix.site_ids[1:]
        for a, b in zip(full[1:], reduced):
            assert a == b

    def test_sample_order_invariance(self):
        matrix, covs = _synthetic(n_sites=4, n_samples=50)
        perm = np.random.default_rng(3).permutation(len(covs.sample_ids))
        matrix_p = MethylationMatrix(
            matrix.site_ids, [matrix.sample_ids[j] for j in perm],
            matrix.values[:, perm], matrix.mode,
        )
        covs_p = CovariateTable(
            [covs.sample_ids[j] for j in perm], covs.design[perm], covs.names
        )
        base = run_sitewise(matrix, covs, "rcg")
        permuted = run_sitewise(matrix_p, covs_p, "rcg")
        for a, b in zip(base, permuted):
            for sa, sb in zip(a.covariates, b.covariates):
                assert sa.estimate == pytest.approx(sb.estimate, abs=1e-10)
                assert sa.p_value == pytest.approx(sb.p_value, abs=1e-10)

    def test_all_models_report_pvalues(self):
        matrix, covs = _synthetic(n_sites=3, n_samples=60)
        for model in ("rcg", "mvalue", "betareg"):
            for res in run_sitewise(matrix, covs, model):
                if res.converged:
                    assert len(res.covariates) == 1
                    assert 0.0 <= res.covariates[0].p_value <= 1.0

    def test_failed_site_does_not_abort(self):
        matrix, covs = _synthetic(n_sites=3, n_samples=40)
        values = matrix.values.copy()
        values[1] = np.nan  # unusable site
        broken = MethylationMatrix(matrix.site_ids, matrix.sample_ids, values)
        results = run_sitewise(broken, covs, "rcg")
        assert len(results) == 3
        bad = results[1]
        assert not bad.converged
        assert bad.n_used == 0
        assert "insufficient_data" in bad.flags
        assert results[0].converged

    def test_bad_model_rejected(self):
        matrix, covs = _synthetic(n_sites=2, n_samples=40)
        with pytest.raises(ConfigError):
            run_sitewise(matrix, covs, "anova")


class TestWriteResults:
    def test_round_trip_exact(self, tmp_path):
        matrix, covs = _synthetic(n_sites=4, n_samples=60)
        results = run_sitewise(matrix, covs, "rcg")
        for fmt in ("tsv", "csv"):
            path = tmp_path / f"out.{fmt}"
            write_results(results, path, format=fmt)
            rows = read_results(path)
            assert len(rows) == 4
            by_site = {r["site_id"]: r for r in rows}
            for res in results:
                row = by_site[res.site_id]
                stat = res.covariates[0]
                assert row["estimate"] == stat.estimate
                assert row["std_error"] == stat.std_error
                assert row["z"] == stat.z
                assert row["p_value"] == stat.p_value
                assert row["alpha_hat"] == res.alpha_hat
                assert row["rho_hat"] == res.rho_hat
                assert row["log_lik"] == res.log_lik
                assert row["n_used"] == res.n_used
                assert row["converged"] == res.converged

    def test_intercept_only_row_has_empty_covariate_fields(self, tmp_path):
        spec = SimSpec(n_samples=50, n_sites=2, alpha=2.0, rho=0.3,
                       zeta_m=(0.1,), zeta_u=(0.0,), seed=1)
        matrix, covs, _ = simulate_dataset(spec)
        results = run_sitewise(matrix, covs, "rcg")
        path = tmp_path / "out.tsv"
        write_results(results, path)
        rows = read_results(path)
        assert len(rows) == 2
        for row in rows:
            assert row["covariate"] == ""
            assert row["estimate"] is None
            assert row["alpha_hat"] is not None
            assert math.isfinite(row["log_lik"])

    def test_empty_results_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            write_results([], tmp_path / "x.tsv")


class TestPowerAndThroughput:
    def test_power_ordering_across_effect_sizes(self):
        rates = {}
        for effect in (0.2, 0.8):
            spec = SimSpec.from_effects(
                gamma=[0.0, effect], zeta_u=[0.0, 0.0], n_samples=200, n_sites=40,
                alpha=2.0, rho=0.4,
                covariates=(CovariateSpec("standard_normal", name="x1"),), seed=88,
            )
            matrix, covs, _ = simulate_dataset(spec)
            results = run_sitewise(matrix, covs, "rcg", workers=2)
            pvals = np.array([r.covariates[0].p_value for r in results if r.converged])
            rates[effect] = float(np.mean(pvals < 0.05))
        assert rates[0.8] > rates[0.2]

    def test_large_table_writes_quickly(self, tmp_path):
        import time

        from rcgbeta.rcg import WaldStat
        from rcgbeta.pipeline import SiteResult

        results = [
            SiteResult(
                site_id=f"site{i:06d}",
                covariates=[WaldStat("x1", 0.123456789 + i, 0.05, 2.4, 0.016)],
                alpha_hat=2.0, rho_hat=0.4, log_lik=-123.456, n_used=200,
                converged=True, model_kind="rcg",
            )
            for i in range(10_000)
        ]
        out = tmp_path / "big.tsv"
        t0 = time.perf_counter()
        write_results(results, out)
        elapsed = time.perf_counter() - t0
        assert elapsed < 5.0
        assert sum(1 for _ in open(out)) == 10_001
