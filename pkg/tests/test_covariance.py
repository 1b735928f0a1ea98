"""Tests for covariance estimators, shrinkage and parameter counts."""

import numpy as np
import pytest

from ctreco.covariance import (
    CovarianceMatrix,
    CovarianceSpec,
    build_omega,
    parameter_count,
    sample_covariance,
    shrinkage_intensity,
)
from ctreco.hierarchy import build_cross_sectional, build_cross_temporal, build_temporal
from ctreco.residuals import ResidualSet


def make_structure(agg, m):
    return build_cross_temporal(build_cross_sectional(np.asarray(agg, float)),
                                build_temporal(m))


def semi_annual():
    return make_structure([[1.0, 1.0]], 2)


def fig1():
    return make_structure([[1.0, 1.0]], 4)


def random_residuals(structure, N, seed=0, kind="multi_step"):
    rng = np.random.default_rng(seed)
    return ResidualSet(structure, rng.normal(size=(N, structure.dim)), kind)


class TestShrinkageIntensity:
    def test_orthogonal_columns_give_one(self):
        rng = np.random.default_rng(0)
        Q, _ = np.linalg.qr(rng.normal(size=(30, 4)))
        assert shrinkage_intensity(Q) == 1.0

    def test_duplicated_columns_drive_lambda_down(self):
        rng = np.random.default_rng(1)
        col = rng.normal(size=2000)
        X = np.stack([col, col, rng.normal(size=2000)], axis=1)
        assert shrinkage_intensity(X) < 0.01

    def test_correlated_gaussian_interior(self):
        rng = np.random.default_rng(2)
        cov = 0.5 * np.eye(9) + 0.5 * np.ones((9, 9))
        X = rng.multivariate_normal(np.zeros(9), cov, size=50)
        lam = shrinkage_intensity(X)
        assert 0.0 < lam < 1.0

    def test_pure_noise_shrinks_hard(self):
        rng = np.random.default_rng(2)
        lam = shrinkage_intensity(rng.normal(size=(50, 9)))
        assert 0.5 <= lam <= 1.0

    def test_formula_against_loop(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(12, 4))
        Z = X / np.sqrt(np.mean(X**2, axis=0))
        N, d = Z.shape
        num = den = 0.0
        for i in range(d):
            for j in range(d):
                if i == j:
                    continue
                w = Z[:, i] * Z[:, j]
                r = w.mean()
                num += w.var() / (N - 1)
                den += r**2
        expected = min(max(num / den, 0.0), 1.0)
        assert shrinkage_intensity(X) == pytest.approx(expected, rel=1e-12)

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            shrinkage_intensity(np.ones((2, 3)))


class TestBuildOmegaBasic:
    def test_ols_identity(self):
        st = fig1()
        om = build_omega(CovarianceSpec("ols"), st)
        np.testing.assert_array_equal(om.values, np.eye(21))

    def test_struc_diagonal(self):
        st = fig1()
        om = build_omega(CovarianceSpec("struc"), st)
        assert om.values[0, 0] == 8.0  # top series, annual cell
        np.testing.assert_array_equal(
            np.diag(om.values), st.summation @ np.ones(8)
        )
        assert np.count_nonzero(om.values - np.diag(np.diag(om.values))) == 0

    def test_wlsv_from_one_step(self):
        st = semi_annual()
        rs = random_residuals(st, 60, seed=4, kind="one_step")
        om = build_omega(CovarianceSpec("wlsv"), st, rs)
        v = np.mean(rs.block(1, 1).reshape(-1) ** 2)
        sl = st.block_slice(1, 1)
        np.testing.assert_allclose(np.diag(om.values)[sl], v)
        # both cells of the block share the one variance
        assert om.values[sl, sl][0, 0] == om.values[sl, sl][1, 1]

    def test_wlsv_multistep_uses_h1_only(self):
        st = semi_annual()
        rs = random_residuals(st, 60, seed=5, kind="multi_step")
        om = build_omega(CovarianceSpec("wlsv"), st, rs)
        v = np.mean(rs.block(2, 1)[:, 0] ** 2)
        np.testing.assert_allclose(om.values[8, 8], v)

    def test_shr_endpoints(self):
        st = semi_annual()
        rs = random_residuals(st, 40, seed=6)
        sam = build_omega(CovarianceSpec("sam"), st, rs)
        shr0 = build_omega(CovarianceSpec("shr", lam=0.0), st, rs)
        shr1 = build_omega(CovarianceSpec("shr", lam=1.0), st, rs)
        np.testing.assert_allclose(shr0.values, sam.values)
        np.testing.assert_allclose(shr1.values, np.diag(np.diag(sam.values)))

    def test_g_is_alias_for_shr(self):
        assert CovarianceSpec("g").kind == "shr"

    def test_sam_matches_definition(self):
        st = semi_annual()
        rs = random_residuals(st, 40, seed=7)
        om = build_omega(CovarianceSpec("sam"), st, rs)
        np.testing.assert_allclose(om.values, rs.E.T @ rs.E / 40)

    def test_missing_residuals(self):
        with pytest.raises(ValueError, match="requires residuals"):
            build_omega(CovarianceSpec("sam"), semi_annual())

    def test_one_step_rejected_for_full_estimators(self):
        st = semi_annual()
        rs = random_residuals(st, 40, seed=8, kind="one_step")
        for kind in ("sam", "shr", "hb", "h", "b"):
            with pytest.raises(ValueError, match="residual kind"):
                build_omega(CovarianceSpec(kind), st, rs)

    def test_bad_kind_and_lambda(self):
        with pytest.raises(ValueError):
            CovarianceSpec("magic")
        with pytest.raises(ValueError):
            CovarianceSpec("shr", lam=1.5)


class TestBdshr:
    def test_blocks_match_per_order_computation(self):
        st = semi_annual()
        rs = random_residuals(st, 80, seed=9, kind="one_step")
        om = build_omega(CovarianceSpec("bdshr"), st, rs)
        for k in (2, 1):
            X = rs.order_matrix(k)
            lam = shrinkage_intensity(X)
            cov = sample_covariance(X)
            Wk = lam * np.diag(np.diag(cov)) + (1 - lam) * cov
            # same-position cross-series cells of the built matrix
            for a in range(3):
                for b in range(3):
                    ia = st.index_of(a, k, 0)
                    ib = st.index_of(b, k, 0)
                    assert om.values[ia, ib] == pytest.approx(Wk[a, b])

    def test_cross_position_cells_are_zero(self):
        st = semi_annual()
        rs = random_residuals(st, 80, seed=10, kind="one_step")
        om = build_omega(CovarianceSpec("bdshr"), st, rs)
        i0 = st.index_of(0, 1, 0)
        i1 = st.index_of(1, 1, 1)
        assert om.values[i0, i1] == 0.0


class TestStructuredKinds:
    @pytest.mark.parametrize("kind,rank", [("hb", 4), ("h", 6), ("b", 6)])
    def test_rank_bounds(self, kind, rank):
        st = semi_annual()
        rs = random_residuals(st, 60, seed=11)
        om = build_omega(CovarianceSpec(kind), st, rs)
        eig = np.linalg.eigvalsh(om.values)
        assert np.sum(eig > 1e-10 * eig[-1]) <= rank
        np.testing.assert_allclose(
            om.values, om.factor @ om.core @ om.factor.T, atol=1e-12
        )

    def test_hb_lambda_zero_is_pure_expansion(self):
        st = semi_annual()
        rs = random_residuals(st, 60, seed=12)
        om = build_omega(CovarianceSpec("hb", lam=0.0), st, rs)
        data = rs.columns(range(1, 3), [1])
        expected = st.summation @ sample_covariance(data) @ st.summation.T
        np.testing.assert_allclose(om.values, expected, atol=1e-12)

    def test_h_expands_high_frequency_block(self):
        st = semi_annual()
        rs = random_residuals(st, 60, seed=13)
        om = build_omega(CovarianceSpec("h", lam=0.0), st, rs)
        data = rs.columns(range(3), [1])
        F = np.kron(np.eye(3), st.te.summation)
        np.testing.assert_allclose(
            om.values, F @ sample_covariance(data) @ F.T, atol=1e-12
        )

    def test_b_expands_bottom_block(self):
        st = semi_annual()
        rs = random_residuals(st, 60, seed=14)
        om = build_omega(CovarianceSpec("b", lam=0.0), st, rs)
        data = rs.columns(range(1, 3), (2, 1))
        F = np.kron(st.cs.summation, np.eye(3))
        np.testing.assert_allclose(
            om.values, F @ sample_covariance(data) @ F.T, atol=1e-12
        )

    def test_all_kinds_symmetric_psd(self):
        st = semi_annual()
        rs_multi = random_residuals(st, 60, seed=15)
        rs_one = random_residuals(st, 60, seed=15, kind="one_step")
        for kind in ("ols", "struc", "shr", "sam", "hb", "h", "b"):
            rs = rs_multi if kind not in ("wlsv", "bdshr") else rs_one
            om = build_omega(CovarianceSpec(kind), st,
                             rs if kind not in ("ols", "struc") else None)
            eig = np.linalg.eigvalsh(om.values)
            assert eig[0] >= -1e-8 * eig[-1]


class TestCovarianceMatrixValidation:
    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            CovarianceMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]),
                             CovarianceSpec("sam"))

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError, match="negative eigenvalue"):
            CovarianceMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]),
                             CovarianceSpec("sam"))


class TestParameterCount:
    def test_ar2_setup(self):
        st = semi_annual()
        counts = [parameter_count(k, st) for k in ("g", "hb", "h", "b")]
        assert counts == [36, 6, 15, 15]

    def test_gdp_setup(self):
        counts = [
            parameter_count(k, (95, 62, 4, 3), include_variances=True)
            for k in ("g", "hb", "h", "b")
        ]
        assert counts == [221445, 30876, 72390, 94395]

    def test_tourism_setup(self):
        counts = [
            parameter_count(k, (525, 304, 12, 16), include_variances=True)
            for k in ("g", "hb", "h", "b")
        ]
        assert counts == [108052350, 6655776, 19848150, 36231328]

    def test_tuple_matches_structure(self):
        st = semi_annual()
        for k in ("g", "hb", "h", "b"):
            assert parameter_count(k, st) == parameter_count(k, (3, 2, 2, 1))

    def test_degenerate_counts_zero(self):
        for k in ("g", "hb", "h", "b"):
            assert parameter_count(k, (1, 1, 1, 0)) == 0

    def test_reduction_percentages(self):
        for dims, inc, expected in [
            ((3, 2, 2, 1), False, (83, 58, 58)),
            ((95, 62, 4, 3), True, (86, 67, 57)),
            ((525, 304, 12, 16), True, (94, 82, 66)),
        ]:
            g = parameter_count("g", dims, include_variances=inc)
            reds = [
                100 * (1 - parameter_count(k, dims, include_variances=inc) / g)
                for k in ("hb", "h", "b")
            ]
            for got, want in zip(reds, expected):
                assert abs(got - want) <= 1.0

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            parameter_count("wlsv", semi_annual())
