import numpy as np
import pytest

from carnot_lab.core.corpus import X, gauge_bump, polynomial
from carnot_lab.core.group import ball_volume
from carnot_lab.core.grid import Grid
from carnot_lab.exceptions.custom_exceptions import DomainError
from carnot_lab.services import lemmas
from carnot_lab.services.common import support_radius
from carnot_lab.services.lemmas import (
    ball_estimate_terms,
    bb1_members,
    bb1_terms,
    lemma_polynomials,
    second_derivative_l1,
    third_derivative_sup,
    verify_lemma1,
    verify_lemma2,
    verify_lemma3,
)


class TestLemmaHelpers:
    """引理辅助函数测试类"""

    def test_lemma_polynomials(self):
        names = [u.name for u in lemma_polynomials()]
        assert names == ["harmonic_cubic", "x_cubed"]

    def test_third_derivative_of_quadratic(self, small_grid, unit_ball):
        """测试二次多项式的三阶水平导数为零"""
        h = polynomial(X ** 2, "x2").sample(small_grid)
        assert third_derivative_sup(h, unit_ball) <= 1e-8

    def test_second_derivative_l1(self, unit_ball):
        """测试 x² 只有 X₁X₁x² = 2 不为零"""
        grid = Grid.around_ball(unit_ball, 16)
        value = second_derivative_l1(polynomial(X ** 2, "x2"), unit_ball, 16)
        assert value == pytest.approx(2.0 * ball_volume(unit_ball, grid), rel=1e-9)

    def test_lemma1_radius_too_small(self, identity_abar):
        """测试 R < 4Λ²"""
        with pytest.raises(DomainError):
            verify_lemma1([identity_abar], lemma_polynomials(), 1.5, R=5.0)


class TestBB1:
    """紧支撑估计测试类"""

    @pytest.mark.parametrize("k", [2, 4, 8])
    def test_members_supported_in_ball(self, k):
        """测试成员的支撑都在 B_kr 内"""
        members = bb1_members(k, 1.0)
        assert [v.name for v in members] == ["bump", "spread", "oscillatory"]
        assert all(support_radius(v) <= k * 1.0 for v in members)

    @pytest.mark.slow
    def test_terms(self, random_abar):
        """测试比值与辅助量有限且为正"""
        terms = bb1_terms(gauge_bump(1.0), random_abar, 2.0, 2.0, 1.0, cells=16)
        assert 0 < terms["ratio"] < np.inf
        assert terms["newtonian"] > 0
        assert {"phi0", "phi1", "phi2", "phi_constant", "pointwise"} <= set(terms)


@pytest.mark.slow
class TestBallEstimate:
    """同心球估计测试类"""

    def test_decomposition_gap(self, identity_abar):
        """测试 A + B + C 三角不等式精确成立"""
        terms = ball_estimate_terms(gauge_bump(1.0), identity_abar, 0.25, 8.0, 2.0, cells=24)
        scale = max(terms["lhs"], terms["A"] + terms["B"] + terms["C"])
        assert terms["gap"] <= 1e-12 * scale
        assert 0 <= terms["c"] < np.inf
        assert terms["mean"] > 0


class TestLemma2Fit:
    """调和替换衰减的斜率判据测试类 (比值被替换)"""

    @pytest.mark.parametrize(
        "ratio,status",
        [(lambda k: 3.0 / k, "pass"), (lambda k: 0.5, "fail"), (lambda k: 1.0 / k ** 3, "fail")],
    )
    def test_slope_status(self, identity_abar, mocker, ratio, status):
        mocker.patch.object(
            lemmas, "lemma2_ratio", side_effect=lambda u, abar, k, *args: {"osc": 1.0, "rhs": 1.0, "ratio": ratio(k)}
        )
        report = verify_lemma2(identity_abar, [gauge_bump(1.0)], k_values=(8, 16, 32))
        assert report.status == status
        assert len(report.measurements) == 4

    def test_errors_leave_too_few_points(self, identity_abar, mocker):
        """测试出错的 k 被跳过, 点数不足时为 inconclusive"""

        def ratio(u, abar, k, *args):
            if k > 8:
                raise DomainError("太粗")
            return {"osc": 1.0, "rhs": 1.0, "ratio": 0.1}

        mocker.patch.object(lemmas, "lemma2_ratio", side_effect=ratio)
        report = verify_lemma2(identity_abar, [gauge_bump(1.0)], k_values=(8, 16, 32), Lambda=1.5)
        assert report.status == "inconclusive"
        assert any("4Λ³" in note for note in report.notes)
        assert sum("太粗" in note for note in report.notes) == 2


@pytest.mark.slow
class TestReducedResolution:
    """较低分辨率下的完整检查测试类"""

    def test_lemma2_decay_slope(self, identity_abar):
        """测试 x³ 的调和替换振荡按 1/k 衰减"""
        report = verify_lemma2(identity_abar, [polynomial(X ** 3, "x_cubed")], k_values=(4, 8, 16), cells=24)
        assert report.status == "pass"
        assert -1.5 <= report.slope <= -0.5
        assert report.r2 >= 0.9

    def test_lemma1_ratios_finite(self, identity_abar):
        """测试三阶导数比值有限且仿射归一化不改变三阶导数"""
        u = lemma_polynomials()[0]
        report = verify_lemma1([identity_abar], [u], 1.5, cells=24)
        by_label = {m.label: m for m in report.measurements}
        assert by_label[f"{u.name}|abar=0"].passed
        assert 0.0 <= by_label[f"{u.name}|abar=0"].values["ratio"] < np.inf
        assert by_label[f"{u.name}|affine"].passed
        assert report.constant is not None

    def test_lemma3_pass(self, random_abar):
        """测试 A + B + C 分解对每个 k 成立且常数有限"""
        u = gauge_bump(1.0)
        report = verify_lemma3(random_abar, [u], 2.0, k_values=(4, 8), r=0.25, cells=24)
        assert report.status == "pass"
        assert {f"{u.name}|k=4|r=0.25", f"{u.name}|k=8|r=0.25", f"{u.name}|spread"} <= {
            m.label for m in report.measurements
        }
        assert 0.0 < report.constant < np.inf
