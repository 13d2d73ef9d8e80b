import numpy as np
import pytest
import sympy as sp

from carnot_lab.core.corpus import (
    COORDS,
    X,
    Y,
    T,
    anisotropic_bump,
    corpus_by_name,
    cutoff,
    default_corpus,
    gauge_bump,
    harmonic_corpus,
    polynomial,
)
from carnot_lab.core.group import HEISENBERG, GroupPoint
from carnot_lab.exceptions.custom_exceptions import DomainError
from carnot_lab.services.common import support_radius


class TestTestFunction:
    """解析测试函数类"""

    def test_bump_values(self, bump):
        """测试鼓包在中心为 1, 支撑外为 0"""
        pts = np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        values = bump.evaluate(pts)
        assert values[0] == pytest.approx(1.0)
        assert 0.0 < values[1] < 1.0
        assert values[2] == 0.0
        assert values[3] == 0.0

    def test_field_derivatives(self):
        """测试 X₁t = −y/2, X₂t = x/2"""
        t = polynomial(T, "t")
        pts = np.array([[2.0, 4.0, 1.0]])
        assert t.evaluate(pts, (0,))[0] == pytest.approx(-2.0)
        assert t.evaluate(pts, (1,))[0] == pytest.approx(1.0)

    def test_derived_name(self):
        """测试导数函数的名称与取值"""
        u = polynomial(X ** 2, "x2")
        du = u.derived((0, 0))
        assert du.name == "X1X1(x2)"
        assert du.evaluate(np.zeros((1, 3)))[0] == pytest.approx(2.0)

    def test_invalid_multi_index(self, bump):
        """测试越界的多重下标"""
        with pytest.raises(DomainError):
            bump.evaluate(np.zeros((1, 3)), (2,))

    def test_translated(self, bump, rng):
        """测试 (u∘L_z)(x) = u(z∘x)"""
        z = GroupPoint((0.2, -0.1, 0.05))
        moved = bump.translated(z)
        pts = rng.uniform(-0.5, 0.5, size=(50, 3))
        assert np.allclose(moved.evaluate(pts), bump.evaluate(HEISENBERG.compose(z.as_array(), pts)), atol=1e-12)
        assert moved.support.center == z.inverse()

    def test_dilated(self, bump, rng):
        """测试 (u∘D_λ)(x) = u(D_λ x)"""
        dilated = bump.dilated(2.0)
        pts = rng.uniform(-0.4, 0.4, size=(50, 3))
        assert np.allclose(dilated.evaluate(pts), bump.evaluate(HEISENBERG.dilate(2.0, pts)), atol=1e-12)
        assert dilated.support.radius == pytest.approx(0.5)

    def test_scaled_and_affine(self):
        """测试数乘与仿射项"""
        u = polynomial(X * Y, "xy").scaled(3.0)
        shifted = u.with_affine({"c0": 1.0, "c1": 2.0, "c2": -1.0})
        pts = np.array([[1.0, 2.0, 0.0]])
        assert u.evaluate(pts)[0] == pytest.approx(6.0)
        assert shifted.evaluate(pts)[0] == pytest.approx(6.0 + 1.0 + 2.0 - 2.0)

    def test_affine_requires_global_function(self, bump):
        """测试带窗口的函数不能加仿射项"""
        with pytest.raises(DomainError):
            bump.with_affine({"c0": 1.0, "c1": 0.0, "c2": 0.0})


class TestCutoff:
    """截断函数测试类"""

    def test_plateau_and_support(self):
        """测试 B_σr 上为 1, B_σ'r 外为 0"""
        phi = cutoff(0.75, 2.0)
        pts = np.array([[0.0, 0.0, 0.0], [1.4, 0.0, 0.0], [1.6, 0.0, 0.0], [1.8, 0.0, 0.0]])
        values = phi.evaluate(pts)
        assert values[0] == 1.0
        assert values[1] == 1.0
        assert 0.0 < values[2] < 1.0
        assert values[3] == 0.0
        # 平台上的导数为零
        assert phi.evaluate(pts[:2], (0,)).tolist() == [0.0, 0.0]

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 0.2])
    def test_sigma_range(self, sigma):
        """测试 σ 必须在 (1/2, 1) 内"""
        with pytest.raises(DomainError):
            cutoff(sigma, 1.0)


class TestCorpora:
    """语料测试类"""

    def test_default_corpus_supported_in_ball(self):
        """测试默认语料的支撑都在 B(0, r) 内"""
        corpus = default_corpus(0.7)
        assert len(corpus) == 6
        assert len({u.name for u in corpus}) == 6
        for u in corpus:
            assert u.compactly_supported
            assert support_radius(u) <= 0.7 * (1 + 1e-12)

    def test_harmonic_corpus(self):
        """测试调和语料满足 X₁²u + X₂²u = 0"""
        for u in harmonic_corpus():
            laplacian = u.derivative_expression((0, 0)) + u.derivative_expression((1, 1))
            assert sp.simplify(laplacian) == 0, u.name

    def test_corpus_by_name(self):
        """测试按名称获取语料"""
        assert [u.name for u in corpus_by_name("harmonic")] == [u.name for u in harmonic_corpus()]
        with pytest.raises(DomainError):
            corpus_by_name("unknown")

    def test_anisotropic_stretch(self):
        """测试拉伸倍数必须 ≥ 1"""
        with pytest.raises(DomainError):
            anisotropic_bump(0.5)

    def test_bump_radius(self):
        """测试半径必须为正"""
        with pytest.raises(DomainError):
            gauge_bump(0.0)

    def test_symbols(self):
        assert COORDS == (X, Y, T)
