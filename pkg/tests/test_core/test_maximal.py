import numpy as np
import pytest

from carnot_lab.core.corpus import gauge_bump, oscillatory_bump
from carnot_lab.core.group import Ball, GroupPoint
from carnot_lab.core.grid import Grid
from carnot_lab.core.maximal import (
    BallFamily,
    BallLattice,
    DomainChain,
    MaximalConfig,
    a_sharp,
    ball_average,
    fefferman_stein_ratio,
    hl_maximal,
    hl_maximal_field,
    local_sharp_maximal,
    maximal_table,
    sample_nodes,
    sharp_maximal_field,
    vmo_modulus,
)
from carnot_lab.core.model import CoefficientField
from carnot_lab.exceptions.custom_exceptions import BallOutsideGridError, DegenerateInputError, DomainError


@pytest.fixture
def maximal_grid(unit_ball):
    return Grid.around_ball(unit_ball, 12)


@pytest.fixture
def lattice():
    return BallLattice.geometric(0.3, 0.6, ratio=1.5, stride=2)


@pytest.fixture
def cfg(lattice):
    return MaximalConfig(lattice)


@pytest.fixture
def chain():
    """Ω_m = B(0, 0.5(1 + 0.1m)), ε = 0.6"""
    return DomainChain(base_radius=0.5, growth=0.1, margin=1.2)


class TestBallLattice:
    """球格测试类"""

    def test_geometric_radii(self, lattice):
        """测试几何半径序列并补上 r_max"""
        assert lattice.radii == pytest.approx((0.3, 0.45, 0.6))

    def test_refined(self, lattice):
        """测试加密加入几何中点并使步长减半"""
        fine = lattice.refined()
        assert fine.stride == 1
        assert len(fine.radii) == 5
        assert set(lattice.radii) <= set(fine.radii)

    @pytest.mark.parametrize(
        "stride,radii",
        [(1, ()), (1, (0.5, 0.2)), (1, (-0.1, 0.2)), (0, (0.1, 0.2))],
    )
    def test_invalid(self, stride, radii):
        """测试非法球格"""
        with pytest.raises(DomainError):
            BallLattice(stride, radii)

    def test_invalid_ratio(self):
        with pytest.raises(DomainError):
            BallLattice.geometric(0.1, 1.0, ratio=1.0)


class TestDomainChain:
    """区域链测试类"""

    def test_radii(self):
        """测试 Ω_m 的半径与 ε_m"""
        chain = DomainChain(base_radius=2.0, growth=0.1, margin=0.025)
        assert chain.radius(0) == pytest.approx(2.0)
        assert chain.radius(3) == pytest.approx(2.6)
        assert chain.epsilon(5) == pytest.approx(0.05)
        with pytest.raises(DomainError):
            chain.radius(-1)

    def test_nesting(self, rng):
        """测试 2ε 邻域包含在下一层区域内"""
        chain = DomainChain(base_radius=1.0, growth=0.1, margin=0.025)
        assert all(chain.check_nesting(m, samples=500, rng=rng) for m in range(3))

    def test_invalid_parameters(self):
        with pytest.raises(DomainError):
            DomainChain(base_radius=0.0)


class TestMaximalOperators:
    """极大算子测试类"""

    def test_constant_function(self, maximal_grid, cfg):
        """测试常数的极大函数等于常数"""
        f = maximal_grid.sample(lambda pts: 3.0)
        family = BallFamily(maximal_grid, cfg.lattice)
        covered = family.covered()
        mf = hl_maximal_field(f, cfg, family)
        assert np.allclose(mf.values[covered], 3.0)
        assert np.all(mf.values[~covered] == 0.0)
        assert hl_maximal(f, GroupPoint.origin(), cfg, family) == pytest.approx(3.0)

    def test_sublinearity(self, maximal_grid, cfg):
        """测试 M(f + g) ≤ Mf + Mg 与 M(cf) = |c|Mf"""
        f = gauge_bump(0.8).sample(maximal_grid)
        g = oscillatory_bump(4.0, 0.8).sample(maximal_grid)
        total = hl_maximal_field(f + g, cfg).values
        separate = hl_maximal_field(f, cfg).values + hl_maximal_field(g, cfg).values
        assert np.all(total <= separate + 1e-12)
        assert np.allclose(hl_maximal_field(-2.0 * f, cfg).values, 2.0 * hl_maximal_field(f, cfg).values)

    def test_sharp_below_twice_maximal(self, maximal_grid, cfg, chain):
        """测试 f♯ ≤ 2Mf"""
        f = oscillatory_bump(4.0, 0.8).sample(maximal_grid)
        sharp = sharp_maximal_field(f, 0, chain, cfg).values
        assert np.all(sharp <= 2.0 * hl_maximal_field(f, cfg).values + 1e-12)

    def test_local_sharp_outside_domain(self, maximal_grid, cfg, chain):
        """测试 x ∉ Ω_m"""
        f = maximal_grid.zeros()
        with pytest.raises(DomainError):
            local_sharp_maximal(f, (0.9, 0.0, 0.0), 0, chain, cfg)

    def test_local_sharp_of_constant(self, maximal_grid, cfg, chain):
        """测试常数的平均振幅为零"""
        f = maximal_grid.sample(lambda pts: 1.5)
        assert local_sharp_maximal(f, (0.0, 0.0, 0.0), 0, chain, cfg) == pytest.approx(0.0, abs=1e-12)

    def test_vmo_modulus(self, maximal_grid, cfg, chain):
        """测试 VMO 模关于 r 单调, 常数的模为零"""
        f = oscillatory_bump(4.0, 0.8).sample(maximal_grid)
        moduli = [vmo_modulus(f, 0, r, chain, cfg) for r in cfg.lattice.radii]
        assert moduli == sorted(moduli)
        assert vmo_modulus(maximal_grid.sample(lambda pts: 1.0), 0, 0.6, chain, cfg) == 0.0
        with pytest.raises(DomainError):
            vmo_modulus(f, 0, 1.0, chain, cfg)

    def test_a_sharp_constant_coefficients(self, maximal_grid, cfg, chain, random_abar):
        """测试常系数的 a♯ = 0"""
        a = CoefficientField.constant(random_abar)
        assert a_sharp(a, 0, 0.6, chain, cfg, maximal_grid) == 0.0

    def test_ball_average(self, maximal_grid):
        """测试球平均与球外错误"""
        f = maximal_grid.sample(lambda pts: 2.0)
        assert ball_average(f, Ball.at_origin(0.5)) == pytest.approx(2.0)
        with pytest.raises(BallOutsideGridError):
            ball_average(f, Ball(GroupPoint((3.0, 0.0, 0.0)), 0.5))

    def test_fefferman_stein_zero_function(self, maximal_grid, cfg, chain):
        """测试 f ≡ 0"""
        with pytest.raises(DegenerateInputError):
            fefferman_stein_ratio(maximal_grid.zeros(), 0.4, 2.0, cfg, chain)

    def test_fefferman_stein_nonzero_mean(self, maximal_grid, cfg, chain):
        """测试积分不为零的函数"""
        f = gauge_bump(0.5).sample(maximal_grid)
        with pytest.raises(DomainError):
            fefferman_stein_ratio(f, 0.4, 2.0, cfg, chain)

    def test_maximal_table(self, maximal_grid, cfg, chain):
        """测试表格列与 Ω_m 内的节点数"""
        f = gauge_bump(0.8).sample(maximal_grid)
        columns, rows = maximal_table(f, 0, chain, cfg)
        assert columns == ["x", "y", "t", "Mf", "f_sharp"]
        assert rows.shape == (int(chain.domain(0).contains(maximal_grid.points).sum()), 5)

    def test_sampled_table(self, maximal_grid, cfg, chain, rng):
        """测试抽样表格的行落在 Ω_m 内且与整表一致"""
        f = gauge_bump(0.8).sample(maximal_grid)
        _, full = maximal_table(f, 0, chain, cfg)
        _, rows = maximal_table(f, 0, chain, cfg, count=10, rng=rng)
        assert rows.shape == (10, 5)
        assert np.all(chain.domain(0).contains(rows[:, :3]))
        for row in rows:
            assert any(np.array_equal(row, other) for other in full)

    def test_sample_nodes(self, maximal_grid, rng):
        """测试随机节点落在区域内, 升序且不重复"""
        domain = Ball.at_origin(0.5)
        nodes = sample_nodes(domain, maximal_grid, 10, rng)
        assert nodes.shape == (10,)
        assert np.all(np.diff(nodes) > 0)
        assert np.all(domain.contains(maximal_grid.points.reshape(-1, 3)[nodes]))
