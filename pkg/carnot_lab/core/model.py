from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Union
import logging

import numpy as np
from scipy.integrate import dblquad

from carnot_lab.config import current_settings
from carnot_lab.core.corpus import TestFunction, gauge_bump
from carnot_lab.core.calculus import horizontal_derivative
from carnot_lab.core.group import HEISENBERG, Ball, CarnotGroup, GroupPoint
from carnot_lab.core.grid import Grid, SampledFunction
from carnot_lab.exceptions.custom_exceptions import (
    DimensionMismatchError,
    DomainError,
    NonEllipticError,
    SingularityError,
)

logger = logging.getLogger(__name__)

Function = Union[SampledFunction, TestFunction]


@dataclass(frozen=True, eq=False)
class EllipticMatrix:
    """
    常系数矩阵 ā (q×q, 严格对称)

    μ|ξ|² ≤ ξᵀāξ ≤ μ⁻¹|ξ|²; 未给出 μ 时取 min(λ_min, 1/λ_max)。
    """

    a: np.ndarray
    mu: Optional[float] = None

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(2, a.shape)
        if not np.array_equal(a, a.T):
            raise NonEllipticError("矩阵不对称")
        eig = np.linalg.eigvalsh(a)
        if eig[0] <= 0:
            raise NonEllipticError(f"最小特征值 {eig[0]:.3e} ≤ 0")
        mu = min(eig[0], 1.0 / eig[-1])
        if self.mu is not None:
            if not 0 < self.mu <= 1:
                raise NonEllipticError(f"μ 必须在 (0, 1] 内, 实际 {self.mu}")
            if eig[0] < self.mu * (1 - 1e-12) or eig[-1] > (1 + 1e-12) / self.mu:
                raise NonEllipticError(f"特征值 {eig} 超出 μ = {self.mu} 的范围")
            mu = self.mu
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "mu", float(mu))

    @classmethod
    def identity(cls, q: int = 2) -> "EllipticMatrix":
        return cls(np.eye(q))

    @classmethod
    def random(cls, mu: float, rng: Optional[np.random.Generator] = None, q: int = 2) -> "EllipticMatrix":
        """特征值在 [μ, 1/μ] 内均匀抽取的随机对称矩阵"""
        if not 0 < mu <= 1:
            raise NonEllipticError(f"μ 必须在 (0, 1] 内, 实际 {mu}")
        rng = rng or np.random.default_rng(current_settings().seed)
        eig = rng.uniform(mu, 1.0 / mu, size=q)
        rotation, _ = np.linalg.qr(rng.normal(size=(q, q)))
        a = rotation @ np.diag(eig) @ rotation.T
        return cls((a + a.T) / 2.0, mu)

    @property
    def q(self) -> int:
        return self.a.shape[0]

    @property
    def factor(self) -> np.ndarray:
        """ā = AAᵀ 的 Cholesky 因子 A"""
        return np.linalg.cholesky(self.a)

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.a, np.eye(self.q)))

    def to_list(self):
        return self.a.tolist()


def as_elliptic(abar) -> EllipticMatrix:
    return abar if isinstance(abar, EllipticMatrix) else EllipticMatrix(np.asarray(abar, dtype=float))


class CoefficientField:
    """
    变系数 a_ij(x)

    evaluator 接受 (..., n) 的点, 返回 (..., q, q) 的矩阵; 采样时检查对称性与椭圆性。
    """

    def __init__(
        self,
        evaluator: Callable[[np.ndarray], np.ndarray],
        mu: float,
        vmo_class: str = "vmo",
        name: str = "coefficients",
        group: CarnotGroup = HEISENBERG,
    ):
        if not 0 < mu <= 1:
            raise NonEllipticError(f"μ 必须在 (0, 1] 内, 实际 {mu}")
        self.evaluator = evaluator
        self.mu = mu
        self.vmo_class = vmo_class
        self.name = name
        self.group = group

    def __repr__(self) -> str:
        return f"CoefficientField(name={self.name!r}, mu={self.mu:g}, class={self.vmo_class!r})"

    def evaluate(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        q = self.group.q
        values = np.broadcast_to(np.asarray(self.evaluator(pts), dtype=float), pts.shape[:-1] + (q, q))
        return np.array(values)

    def sample(self, grid: Grid) -> np.ndarray:
        """
        节点上的系数, 形状 grid.shape + (q, q)

        Raises:
            NonEllipticError: 某节点上不对称或不满足椭圆性
        """
        values = self.evaluate(grid.points)
        if not np.array_equal(values, np.swapaxes(values, -1, -2)):
            raise NonEllipticError(f"{self.name}: 系数不对称")
        eig = np.linalg.eigvalsh(values)
        tol = 1e-12
        if np.min(eig[..., 0]) < self.mu * (1 - tol) or np.max(eig[..., -1]) > (1 + tol) / self.mu:
            raise NonEllipticError(f"{self.name}: 节点上的特征值超出 μ = {self.mu:g} 的范围")
        return values

    def average(self, grid: Grid, ball: Ball) -> EllipticMatrix:
        """球上的平均矩阵 (a_ij)_B"""
        values = self.sample(grid)[grid.ball_mask(ball)]
        mean = values[0] if np.all(values == values[0]) else values.mean(axis=0)
        return EllipticMatrix((mean + mean.T) / 2.0)

    def dilated(self, lam: float) -> "CoefficientField":
        """x ↦ a(D_λ x)"""
        group = self.group
        return CoefficientField(
            lambda pts: self.evaluator(group.dilate(lam, np.asarray(pts, dtype=float))),
            self.mu,
            self.vmo_class,
            f"{self.name}∘D",
            group,
        )

    @classmethod
    def constant(cls, abar: EllipticMatrix, group: CarnotGroup = HEISENBERG) -> "CoefficientField":
        abar = as_elliptic(abar)
        return cls(lambda pts: abar.a, abar.mu, "constant", "constant", group)

    @classmethod
    def scalar_profile(
        cls,
        profile: Callable[[np.ndarray], np.ndarray],
        mu: float,
        name: str = "scalar",
        group: CarnotGroup = HEISENBERG,
    ) -> "CoefficientField":
        """a(x) = profile(x)·I"""
        eye = np.eye(group.q)

        def evaluator(pts):
            return np.asarray(profile(pts), dtype=float)[..., None, None] * eye

        return cls(evaluator, mu, "smooth", name, group)

    @classmethod
    def loglog_vmo(
        cls,
        amplitude: float,
        scale: float = 1.0,
        center: Optional[GroupPoint] = None,
        group: CarnotGroup = HEISENBERG,
    ) -> "CoefficientField":
        """
        a = I + amp·[[sin θ, cos θ], [cos θ, −sin θ]], θ = log(1 + log(1 + scale/ρ))

        扰动矩阵的特征值为 ±1, 因此 a 的特征值恰为 1 ± amp, μ = 1 − amp。
        θ 在中心处无界但振荡趋于零, a 属于 VMO 而不连续。
        """
        if not 0 <= amplitude < 1:
            raise NonEllipticError(f"振幅必须在 [0, 1) 内, 实际 {amplitude}")
        origin = (center or GroupPoint.origin(group)).as_array()

        def evaluator(pts):
            rho = np.maximum(group.quasi_distance(pts, origin), 1e-300)
            theta = np.log1p(np.log1p(scale / rho))
            s, c = np.sin(theta), np.cos(theta)
            out = np.empty(pts.shape[:-1] + (2, 2))
            out[..., 0, 0] = 1.0 + amplitude * s
            out[..., 1, 1] = 1.0 - amplitude * s
            out[..., 0, 1] = amplitude * c
            out[..., 1, 0] = amplitude * c
            return out

        return cls(evaluator, 1.0 - amplitude, "vmo", f"loglog_a{amplitude:g}", group)


def _second_derivatives(u: Function, grid: Grid) -> np.ndarray:
    """X_iX_j u, 形状 (q, q) + grid.shape"""
    q = grid.group.q
    out = np.empty((q, q) + grid.shape)
    for i in range(q):
        for j in range(q):
            out[i, j] = horizontal_derivative(u, (i, j), grid).values
    return out


def _resolve_grid(u: Function, grid: Optional[Grid]) -> Grid:
    if isinstance(u, SampledFunction):
        return u.grid
    if grid is None:
        raise DomainError("解析函数求值需要网格")
    return grid


def model_apply(abar, u: Function, grid: Optional[Grid] = None) -> SampledFunction:
    """
    L̄u = Σ ā_ij X_iX_j u

    Raises:
        NonEllipticError: ā 不是椭圆矩阵
    """
    abar = as_elliptic(abar)
    grid = _resolve_grid(u, grid)
    second = _second_derivatives(u, grid)
    return SampledFunction(grid, np.einsum("ij,ij...->...", abar.a, second))


def variable_apply(a: CoefficientField, u: Function, grid: Optional[Grid] = None) -> SampledFunction:
    """Lu = Σ a_ij(x) X_iX_j u"""
    grid = _resolve_grid(u, grid)
    coefficients = a.sample(grid)
    second = _second_derivatives(u, grid)
    return SampledFunction(grid, np.einsum("...ij,ij...->...", coefficients, second))


def _gauge_power_gradient(group: CarnotGroup, pts: np.ndarray, exponent: float) -> np.ndarray:
    """∇(N^exponent), N 为规范的光滑幂, 梯度由中心差分求出"""
    step = 1e-6
    grad = np.empty(pts.shape)
    for k in range(group.n):
        shift = np.zeros(group.n)
        shift[k] = step
        grad[..., k] = (group.gauge_quartic(pts + shift) - group.gauge_quartic(pts - shift)) / (2 * step)
    quartic = group.gauge_quartic(pts)
    return exponent * quartic[..., None] ** (exponent - 1) * grad


@lru_cache(maxsize=None)
def gamma_normalization(group: CarnotGroup = HEISENBERG) -> float:
    """
    c_Γ: 使 Γ = −c_Γ ρ^{2−Q} 满足 ΣX_i²Γ = δ

    向量场无散度, 因此 ΣX_i² = div(M∇·), M = Σ b_i b_iᵀ; 计算 M∇ρ^{2−Q}
    在单位规范球面上的外法向通量 F, 得 c_Γ = −1/F。
    """
    exponent = (2.0 - group.Q) / (2.0 * group.s)
    (u_lo, u_hi), (v_lo, v_hi) = group.sphere_chart_domain

    def integrand(v, u):
        point, du, dv = group.sphere_chart(np.asarray(u), np.asarray(v))
        grad = _gauge_power_gradient(group, point, exponent)
        b = group.field_matrix(point)
        flux = b.T @ (b @ grad)
        # 外法向为 ∂_v P × ∂_u P
        return float(np.dot(flux, np.cross(dv, du)))

    value, error = dblquad(integrand, u_lo, u_hi, v_lo, v_hi, epsabs=1e-11, epsrel=1e-11)
    c_gamma = -1.0 / value
    logger.info(f"c_Γ = {c_gamma:.12f} (通量 {value:.12f}, 误差估计 {error:.1e})")
    return c_gamma


def _pullback(abar: EllipticMatrix, pts: np.ndarray):
    """φ_{A⁻¹}(p) = (A⁻¹(x, y), t/det A) 与 det(A)⁻²"""
    A = abar.factor
    det = float(np.linalg.det(A))
    A_inv = np.linalg.inv(A)
    pulled = np.array(pts, dtype=float, copy=True)
    pulled[..., :2] = pts[..., :2] @ A_inv.T
    pulled[..., 2] = pts[..., 2] / det
    return pulled, det ** -2


def gamma_values(abar, pts: np.ndarray, group: CarnotGroup = HEISENBERG) -> np.ndarray:
    """
    Γ_ā 的向量化取值, 原点处返回 -inf

    Γ_ā(p) = det(A)⁻² Γ_I(φ_{A⁻¹}(p)), Γ_I = −c_Γ ρ^{2−Q}。
    """
    abar = as_elliptic(abar)
    pts = group.check_points(pts)
    c_gamma = gamma_normalization(group)
    if abar.is_identity:
        pulled, weight = pts, 1.0
    else:
        pulled, weight = _pullback(abar, pts)
    rho = group.gauge_norm(pulled)
    with np.errstate(divide="ignore"):
        return -weight * c_gamma * rho ** (2.0 - group.Q)


def fundamental_solution(abar, p: GroupPoint) -> float:
    """
    Γ_ā(p)

    Raises:
        SingularityError: p = 0
    """
    if not any(p.coords):
        raise SingularityError()
    return float(gamma_values(abar, p.as_array(), p.group))


def singular_cell_mean(abar, cell_volume: float, group: CarnotGroup = HEISENBERG) -> float:
    """
    Γ_ā 在体积为 cell_volume 的极点单元上的平均

    用体积相同的 φ_A(B(0, ε)) 代替单元, 其上 ∫ρ^{2−Q} = Q|B1| ε²/2。
    """
    abar = as_elliptic(abar)
    det = float(np.linalg.det(abar.factor))
    unit = group.unit_ball_volume
    eps = (cell_volume / (det ** 2 * unit)) ** (1.0 / group.Q)
    integral = -gamma_normalization(group) * group.Q * unit * eps ** 2 / 2.0
    return integral / cell_volume


def _boundary_layer(grid: Grid) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    for axis in range(grid.group.n):
        index = [slice(None)] * grid.group.n
        index[axis] = 0
        mask[tuple(index)] = True
        index[axis] = -1
        mask[tuple(index)] = True
    return mask


def newtonian_potential(
    abar,
    f: SampledFunction,
    targets: Optional[np.ndarray] = None,
    chunk: int = 256,
) -> Union[SampledFunction, np.ndarray]:
    """
    u(x) = ∫ Γ_ā(y⁻¹∘x) f(y) dy 的直接求积

    含极点的单元用 singular_cell_mean 处理。targets 为 None 时在 f 的网格上
    计算并返回 SampledFunction, 否则返回 targets 上的数组。

    Raises:
        DomainError: f 的支撑触及盒子边界
    """
    abar = as_elliptic(abar)
    grid = f.grid
    group = grid.group
    if np.any(f.values[_boundary_layer(grid)] != 0):
        raise DomainError("f 的支撑触及网格盒子边界")

    flat = f.values.ravel()
    sources = np.nonzero(flat)[0]
    dv = grid.cell_volume
    y_inv = group.inverse(grid.points.reshape(-1, group.n)[sources])
    weights = flat[sources] * dv
    singular = singular_cell_mean(abar, dv, group)

    on_grid = targets is None
    pts = grid.points.reshape(-1, group.n) if on_grid else group.check_points(targets).reshape(-1, group.n)
    out = np.zeros(pts.shape[0])
    if sources.size:
        for start in range(0, pts.shape[0], chunk):
            block = pts[start:start + chunk]
            rel = group.compose(y_inv[None, :, :], block[:, None, :])
            kernel = gamma_values(abar, rel, group)
            pole = np.all(rel == 0.0, axis=-1)
            kernel[pole] = singular
            out[start:start + chunk] = kernel @ weights

    logger.debug(f"Newton 位势: {sources.size} 个源点, {pts.shape[0]} 个目标点")
    if on_grid:
        return SampledFunction(grid, out.reshape(grid.shape))
    return out.reshape(np.shape(targets)[:-1])


def interior_mask(grid: Grid, layers: int = 3) -> np.ndarray:
    """距离盒子各面至少 layers 个节点的内部掩码"""
    mask = np.zeros(grid.shape, dtype=bool)
    inner = tuple(slice(layers, c - layers) for c in grid.shape)
    mask[inner] = True
    return mask


def fd_residual(abar, grid: Grid, inner_radius: float = 0.5, layers: int = 3) -> float:
    """
    ρ ≥ inner_radius 处差分 L̄Γ_ā 的最大模

    极点所在节点取 0; 靠近盒子面的 layers 层节点不参与比较。
    """
    abar = as_elliptic(abar)
    pts = grid.points
    with np.errstate(divide="ignore"):
        values = gamma_values(abar, pts, grid.group)
    values[~np.isfinite(values)] = 0.0
    residual = model_apply(abar, SampledFunction(grid, values))
    mask = interior_mask(grid, layers) & (grid.group.gauge_norm(pts) >= inner_radius)
    if not np.any(mask):
        raise DomainError("没有满足 ρ ≥ inner_radius 的内部节点")
    return float(np.max(np.abs(residual.values[mask])))


def mollified_point_mass(grid: Grid, width: float) -> SampledFunction:
    """原点处的光滑点质量: 离散积分为 1 的规范鼓包"""
    bump = gauge_bump(width).sample(grid)
    total = bump.integrate()
    if total <= 0:
        raise DomainError(f"宽度 {width:g} 低于网格分辨率")
    return bump * (1.0 / total)
