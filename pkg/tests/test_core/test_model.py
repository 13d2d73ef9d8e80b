import math

import numpy as np
import pytest

from carnot_lab.core.corpus import X, Y, harmonic_corpus, polynomial
from carnot_lab.core.group import HEISENBERG, GroupPoint, dilate, inverse
from carnot_lab.core.model import (
    CoefficientField,
    EllipticMatrix,
    as_elliptic,
    fundamental_solution,
    gamma_normalization,
    gamma_values,
    interior_mask,
    model_apply,
    mollified_point_mass,
    newtonian_potential,
    singular_cell_mean,
    variable_apply,
)
from carnot_lab.exceptions.custom_exceptions import (
    DimensionMismatchError,
    DomainError,
    NonEllipticError,
    SingularityError,
)


class TestEllipticMatrix:
    """常系数矩阵测试类"""

    @pytest.mark.parametrize(
        "a",
        [
            [[1.0, 0.5], [0.0, 1.0]],
            [[1.0, 0.0], [0.0, -1.0]],
            [[0.0, 0.0], [0.0, 0.0]],
        ],
    )
    def test_rejects_non_elliptic(self, a):
        """测试不对称或非正定的矩阵"""
        with pytest.raises(NonEllipticError):
            EllipticMatrix(np.array(a))

    def test_rejects_wrong_shape(self):
        with pytest.raises(DimensionMismatchError):
            EllipticMatrix(np.ones((2, 3)))

    def test_mu_bounds(self):
        """测试给定 μ 时的特征值范围检查"""
        a = np.diag([0.5, 2.0])
        assert EllipticMatrix(a, 0.5).mu == 0.5
        with pytest.raises(NonEllipticError):
            EllipticMatrix(a, 0.8)
        with pytest.raises(NonEllipticError):
            EllipticMatrix(a, 1.5)

    def test_default_mu(self):
        """未给出 μ 时取 min(λ_min, 1/λ_max)"""
        assert EllipticMatrix(np.diag([0.8, 4.0])).mu == pytest.approx(0.25)

    def test_random_within_mu(self, rng):
        """测试随机矩阵的特征值在 [μ, 1/μ] 内"""
        for _ in range(20):
            abar = EllipticMatrix.random(0.5, rng)
            eig = np.linalg.eigvalsh(abar.a)
            assert eig[0] >= 0.5 * (1 - 1e-12)
            assert eig[-1] <= 2.0 * (1 + 1e-12)
            assert np.array_equal(abar.a, abar.a.T)

    def test_factor(self, random_abar):
        """测试 ā = AAᵀ"""
        A = random_abar.factor
        assert np.allclose(A @ A.T, random_abar.a)

    def test_identity(self, identity_abar):
        assert identity_abar.is_identity
        assert as_elliptic([[1.0, 0.0], [0.0, 1.0]]).is_identity
        assert identity_abar.to_list() == [[1.0, 0.0], [0.0, 1.0]]


class TestCoefficientField:
    """变系数测试类"""

    def test_loglog_amplitude(self):
        """测试振幅必须在 [0, 1) 内"""
        with pytest.raises(NonEllipticError):
            CoefficientField.loglog_vmo(1.0)

    def test_loglog_eigenvalues(self, small_grid):
        """测试 a 的特征值恰为 1 ± amp"""
        a = CoefficientField.loglog_vmo(0.4)
        eig = np.linalg.eigvalsh(a.sample(small_grid))
        assert np.allclose(eig[..., 0], 0.6)
        assert np.allclose(eig[..., 1], 1.4)
        assert a.mu == pytest.approx(0.6)

    def test_sample_rejects_non_elliptic(self, small_grid):
        """测试采样时发现椭圆性破坏"""
        a = CoefficientField.scalar_profile(lambda pts: 1.0 + pts[..., 0], 0.5)
        with pytest.raises(NonEllipticError):
            a.sample(small_grid)

    def test_average_of_constant(self, small_grid, unit_ball, random_abar):
        """测试常系数的球平均"""
        a = CoefficientField.constant(random_abar)
        assert np.array_equal(a.average(small_grid, unit_ball).a, random_abar.a)

    def test_dilated(self, rng):
        """测试 a∘D_λ"""
        a = CoefficientField.loglog_vmo(0.3)
        pts = rng.uniform(-1, 1, size=(10, 3))
        assert np.allclose(a.dilated(0.5).evaluate(pts), a.evaluate(HEISENBERG.dilate(0.5, pts)))


class TestModelOperator:
    """模型算子测试类"""

    def test_harmonic_corpus(self, small_grid, identity_abar):
        """测试调和多项式满足 L̄u = 0"""
        for u in harmonic_corpus():
            assert np.max(np.abs(model_apply(identity_abar, u, small_grid).values)) <= 1e-9, u.name

    def test_quadratic(self, small_grid, random_abar):
        """测试 L̄(x²) = 2ā₁₁"""
        lx2 = model_apply(random_abar, polynomial(X ** 2, "x2"), small_grid)
        assert np.allclose(lx2.values, 2.0 * random_abar.a[0, 0])

    def test_sampled_matches_analytic(self, small_grid, random_abar):
        """二次多项式的差分算子是精确的"""
        u = polynomial(X ** 2, "x2")
        assert np.allclose(
            model_apply(random_abar, u.sample(small_grid)).values,
            model_apply(random_abar, u, small_grid).values,
            atol=1e-8,
        )

    def test_variable_matches_constant(self, small_grid, random_abar):
        """测试常系数的变系数算子与 L̄ 一致"""
        u = polynomial(X ** 2 + X * Y, "x2_plus_xy")
        a = CoefficientField.constant(random_abar)
        assert np.allclose(variable_apply(a, u, small_grid).values, model_apply(random_abar, u, small_grid).values)

    def test_analytic_requires_grid(self, identity_abar):
        with pytest.raises(DomainError):
            model_apply(identity_abar, polynomial(X, "x"))


class TestFundamentalSolution:
    """基本解测试类"""

    def test_normalization(self):
        """测试 c_Γ = 1/(2π)"""
        assert gamma_normalization() == pytest.approx(1.0 / (2.0 * math.pi), rel=1e-6)

    def test_value_on_unit_sphere(self, identity_abar):
        """测试 Γ_I(1, 0, 0) = −c_Γ"""
        value = fundamental_solution(identity_abar, GroupPoint((1.0, 0.0, 0.0)))
        assert value == pytest.approx(-gamma_normalization())

    def test_singularity(self, identity_abar, origin):
        """测试原点处奇异"""
        with pytest.raises(SingularityError):
            fundamental_solution(identity_abar, origin)

    @pytest.mark.parametrize("lam", [0.5, 2.0, 3.0])
    def test_homogeneity(self, random_abar, lam):
        """测试 Γ(D_λ p) = λ^{2−Q} Γ(p)"""
        p = GroupPoint((0.3, -0.2, 0.1))
        assert fundamental_solution(random_abar, dilate(lam, p)) == pytest.approx(
            lam ** -2 * fundamental_solution(random_abar, p), rel=1e-10
        )

    def test_sign_and_symmetry(self, random_abar, rng):
        """测试 Γ ≤ 0 且 Γ(p⁻¹) = Γ(p)"""
        for raw in rng.uniform(-1, 1, size=(20, 3)):
            p = GroupPoint(tuple(raw))
            value = fundamental_solution(random_abar, p)
            assert value < 0
            assert fundamental_solution(random_abar, inverse(p)) == pytest.approx(value, rel=1e-12)

    def test_vectorized_pole(self, identity_abar):
        """测试向量化取值在原点返回 −inf"""
        values = gamma_values(identity_abar, np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
        assert values[0] == -np.inf
        assert np.isfinite(values[1])

    def test_singular_cell_mean(self, identity_abar):
        """测试极点单元平均为负并随单元缩小而发散"""
        coarse = singular_cell_mean(identity_abar, 1e-3)
        fine = singular_cell_mean(identity_abar, 1e-5)
        assert fine < coarse < 0


class TestNewtonianPotential:
    """Newton 位势测试类"""

    def test_point_mass_integrates_to_one(self, small_grid):
        """测试光滑点质量的离散积分为 1"""
        assert mollified_point_mass(small_grid, 0.5).integrate() == pytest.approx(1.0)

    def test_support_touching_boundary(self, small_grid, identity_abar):
        """测试 f 的支撑触及盒子边界"""
        with pytest.raises(DomainError):
            newtonian_potential(identity_abar, small_grid.sample(lambda pts: 1.0))

    def test_far_field_sign(self, small_grid, identity_abar):
        """测试非负源的位势为负"""
        f = mollified_point_mass(small_grid, 0.5)
        targets = np.array([[1.2, 0.0, 0.0], [0.0, 1.2, 0.0]])
        values = newtonian_potential(identity_abar, f, targets)
        assert values.shape == (2,)
        assert np.all(values < 0)

    def test_interior_mask(self, small_grid):
        mask = interior_mask(small_grid, 3)
        assert mask.sum() == 17 ** 3
