import math

import numpy as np
import pytest

from carnot_lab.core.corpus import X, gauge_bump, polynomial
from carnot_lab.core.group import Ball, GroupPoint
from carnot_lab.services.common import (
    LogLogFit,
    ball_mean,
    combine_status,
    finite_or_none,
    fit_loglog,
    measurement,
    new_report,
    region_grid,
    slope_status,
    support_radius,
)


class TestLogLogFit:
    """对数拟合测试类"""

    def test_power_law(self):
        """测试精确幂律的斜率与 R²"""
        ks = [2, 4, 8, 16]
        fit = fit_loglog(ks, [3.0 * k ** -1.0 for k in ks])
        assert fit.slope == pytest.approx(-1.0)
        assert fit.intercept == pytest.approx(math.log(3.0))
        assert fit.r2 == pytest.approx(1.0)
        assert fit.points == 4

    def test_constant_data(self):
        """常数数据的 R² 记为 1"""
        fit = fit_loglog([1, 2, 4], [0.5, 0.5, 0.5])
        assert fit == LogLogFit(0.0, pytest.approx(math.log(0.5)), 1.0, 3)

    def test_unusable_points(self):
        """测试非正值与非有限值被丢弃"""
        assert fit_loglog([1, 2, 4], [0.0, -1.0, 2.0]) is None
        fit = fit_loglog([1, 2, 4, 8], [1.0, np.inf, 0.25, np.nan])
        assert fit.points == 2


class TestStatus:
    """状态合并测试类"""

    @pytest.mark.parametrize(
        "statuses,expected",
        [
            (["pass", "pass"], "pass"),
            (["pass", "inconclusive"], "inconclusive"),
            (["inconclusive", "fail", "pass"], "fail"),
            ([], "pass"),
        ],
    )
    def test_combine_status(self, statuses, expected):
        assert combine_status(statuses) == expected

    def test_slope_status(self):
        """测试斜率区间与点数/R² 不足"""
        good = LogLogFit(-1.0, 0.0, 0.99, 4)
        assert slope_status(good, -1.5, -0.5) == "pass"
        assert slope_status(good, upper=-1.2) == "fail"
        assert slope_status(LogLogFit(-1.0, 0.0, 0.99, 2)) == "inconclusive"
        assert slope_status(LogLogFit(-1.0, 0.0, 0.1, 4)) == "inconclusive"
        assert slope_status(None) == "inconclusive"


class TestReports:
    """报告构造测试类"""

    def test_new_report_cleans_params(self):
        """测试 numpy 标量与元组被转换为 JSON 友好的类型"""
        report = new_report("demo", cells=np.int64(16), ks=(8, 16))
        assert report.params == {"cells": 16, "ks": [8, 16]}
        assert type(report.params["cells"]) is int
        assert report.status == "pass"

    def test_measurement(self):
        m = measurement("x", True, value=np.float64(1.5), count=3)
        assert m.values == {"value": 1.5, "count": 3.0}
        assert m.passed is True

    def test_finite_or_none(self):
        assert finite_or_none(1.5) == 1.5
        assert finite_or_none(float("inf")) is None


class TestRegions:
    """区域网格测试类"""

    def test_support_radius(self):
        """测试偏心鼓包的支撑半径"""
        bump = gauge_bump(0.5, GroupPoint((1.0, 0.0, 0.0)))
        assert support_radius(bump) == pytest.approx(1.5)
        assert support_radius(polynomial(X, "x")) == float("inf")

    def test_region_grid_shrinks_to_support(self):
        """测试支撑小于球时网格只覆盖支撑"""
        ball = Ball.at_origin(4.0)
        grid, mask, full = region_grid(ball, gauge_bump(1.0), 16)
        assert not full
        assert mask.all()
        assert grid.upper[0] < 4.0

    def test_region_grid_full_ball(self):
        ball = Ball.at_origin(1.0)
        grid, mask, full = region_grid(ball, polynomial(X, "x"), 16)
        assert full
        assert np.array_equal(mask, grid.ball_mask(ball))

    def test_ball_mean(self):
        """测试网格未覆盖整个球时按球体积平均"""
        ball = Ball.at_origin(4.0)
        grid, mask, full = region_grid(ball, gauge_bump(1.0), 16)
        f = grid.sample(lambda pts: 1.0)
        assert ball_mean(f, mask, ball, full) == pytest.approx(f.integrate(mask) / ball.volume)
        assert ball_mean(f, mask, ball, True) == pytest.approx(1.0)
