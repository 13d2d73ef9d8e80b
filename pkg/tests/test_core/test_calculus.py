import numpy as np
import pytest

from carnot_lab.core.calculus import (
    apply_field,
    commutator_check,
    cutoff_constants,
    d_k_magnitude,
    horizontal_derivative,
    make_cutoff,
    multi_indices,
    normalize_affine,
    region_mask,
    sobolev_norm,
)
from carnot_lab.core.corpus import X, Y, T, polynomial, polynomial_corpus
from carnot_lab.core.group import Ball
from carnot_lab.core.grid import Grid
from carnot_lab.exceptions.custom_exceptions import DomainError


class TestHorizontalDerivatives:
    """水平导数测试类"""

    def test_sampled_matches_analytic_for_quadratics(self, small_grid):
        """二次多项式的差分导数是精确的"""
        u = polynomial(X * T - Y ** 2 + 3 * X, "quadratic")
        sampled = u.sample(small_grid)
        for i in range(2):
            fd = horizontal_derivative(sampled, (i,))
            assert np.allclose(fd.values, u.evaluate(small_grid.points, (i,)), atol=1e-9)

    def test_analytic_requires_grid(self):
        """测试解析函数求值需要网格"""
        with pytest.raises(DomainError):
            horizontal_derivative(polynomial(X, "x"), (0,))

    def test_apply_field_on_test_function(self):
        """测试解析函数返回导数函数"""
        du = apply_field(1, polynomial(X * Y, "xy"))
        assert du.evaluate(np.array([[3.0, 0.0, 0.0]]))[0] == pytest.approx(3.0)

    def test_multi_indices(self):
        """测试 |I| = k 的多重下标个数为 q^k"""
        assert len(list(multi_indices(2, 2))) == 4
        assert list(multi_indices(1, 2)) == [(0,), (1,)]

    def test_d_k_magnitude(self, small_grid):
        """测试 D¹x = |X₁x| + |X₂x| = 1"""
        d1 = d_k_magnitude(polynomial(X, "x"), 1, small_grid)
        assert np.allclose(d1.values, 1.0)

    def test_commutator(self, small_grid):
        """测试 X₁X₂ − X₂X₁ = ∂_t"""
        for u in polynomial_corpus():
            assert commutator_check(0, 1, u, small_grid) <= 1e-10


class TestSobolevNorm:
    """Sobolev 范数测试类"""

    def test_constant(self, small_grid, unit_ball):
        """测试常数的各阶范数相同"""
        f = small_grid.sample(lambda pts: 2.0)
        l2 = f.lp_norm(2.0, small_grid.ball_mask(unit_ball))
        assert sobolev_norm(f, 0, 2.0, unit_ball) == pytest.approx(l2)
        assert sobolev_norm(f, 2, 2.0, unit_ball) == pytest.approx(l2, abs=1e-9)

    def test_invalid_arguments(self, small_grid):
        """测试非法的 p 与 k"""
        f = small_grid.zeros()
        with pytest.raises(DomainError):
            sobolev_norm(f, 1, 0.5)
        with pytest.raises(DomainError):
            sobolev_norm(f, 4, 2.0)

    def test_region_box(self, small_grid):
        """测试盒子区域"""
        mask = region_mask(small_grid, ((-0.5, -0.5, -0.1), (0.5, 0.5, 0.1)))
        assert mask.any() and not mask.all()
        with pytest.raises(DomainError):
            region_mask(small_grid, ((-5, -5, -5), (5, 5, 5)))


class TestCutoffConstants:
    """截断常数测试类"""

    def test_constants_are_finite(self, small_grid):
        """测试截断常数有限且为正"""
        constants = cutoff_constants(make_cutoff(0.75, 1.0), small_grid.refined())
        assert set(constants) == {"c1", "c2"}
        assert all(0 < v < np.inf for v in constants.values())


class TestAffineNormalization:
    """仿射归一化测试类"""

    def test_normalized_means_vanish(self):
        """测试 ∫_{B₄}ũ = 0 且 ∫_{B_4Λ}X_iũ = 0"""
        Lambda = 1.5
        grid = Grid.around_ball(Ball.at_origin(4.0 * Lambda), 16)
        u = polynomial(X * T - Y ** 2 + 3 + X, "shifted").sample(grid)
        normalized, coefficients = normalize_affine(u, Lambda)
        inner = grid.ball_mask(Ball.at_origin(4.0))
        outer = grid.ball_mask(Ball.at_origin(4.0 * Lambda))
        scale = float(np.max(np.abs(u.values)))
        assert abs(normalized.average(inner)) <= 1e-10 * scale
        for i in range(2):
            assert abs(apply_field(i, normalized).average(outer)) <= 1e-10 * scale
        # 二阶水平导数不变
        assert np.allclose(
            horizontal_derivative(normalized, (0, 1)).values, horizontal_derivative(u, (0, 1)).values, atol=1e-8
        )
        assert set(coefficients) == {"c0", "c1", "c2"}

    def test_lambda_below_one(self, small_grid):
        """测试 Λ < 1"""
        with pytest.raises(DomainError):
            normalize_affine(small_grid.zeros(), 0.5)

    def test_balls_outside_grid(self, small_grid):
        """测试 B_4Λ 不在网格内"""
        with pytest.raises(DomainError):
            normalize_affine(small_grid.zeros(), 1.5)
