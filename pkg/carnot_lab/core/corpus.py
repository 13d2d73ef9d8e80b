from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
import sympy as sp

from carnot_lab.core.group import HEISENBERG, Ball, CarnotGroup, GroupPoint
from carnot_lab.core.grid import Grid, SampledFunction
from carnot_lab.exceptions.custom_exceptions import DomainError

logger = logging.getLogger(__name__)

X, Y, T = sp.symbols("x y t", real=True)
COORDS = (X, Y, T)

# 窗口变量 w: w ≥ 1 时函数为 0, w ≤ 0 时 (若有平台) 取平台值
_EDGE = 1e-9

MultiIndex = Tuple[int, ...]


@lru_cache(maxsize=None)
def _derivative(expr: sp.Expr, index: MultiIndex, group: CarnotGroup) -> sp.Expr:
    """X_I expr = X_{i1}(X_{i2}(... X_{ik} expr))"""
    if not index:
        return expr
    inner = _derivative(expr, index[1:], group)
    return group.symbolic_field(index[0], inner, COORDS)


@lru_cache(maxsize=None)
def _compile(expr: sp.Expr) -> Callable:
    return sp.lambdify(COORDS, expr, modules="numpy", cse=True)


def _evaluate(expr: sp.Expr, pts: np.ndarray) -> np.ndarray:
    fn = _compile(expr)
    value = fn(pts[..., 0], pts[..., 1], pts[..., 2])
    return np.broadcast_to(np.asarray(value, dtype=float), pts.shape[:-1])


def check_multi_index(index: Sequence[int], group: CarnotGroup) -> MultiIndex:
    index = tuple(int(i) for i in index)
    if any(i < 0 or i >= group.q for i in index):
        raise DomainError(f"多重下标 {index} 超出生成元范围 0..{group.q - 1}")
    return index


@dataclass(frozen=True, eq=False)
class TestFunction:
    """
    解析测试函数

    expression 在窗口内有效; 窗口外 (w ≥ 1) 恒为零, 有平台时 w ≤ 0 处取 plateau_value。
    导数由 sympy 精确求出并编译为 numpy 函数。
    """

    __test__ = False

    name: str
    expression: sp.Expr
    window: Optional[sp.Expr] = None
    support: Optional[Ball] = None
    has_plateau: bool = False
    plateau_value: float = 1.0
    params: Dict[str, float] = field(default_factory=dict)
    group: CarnotGroup = field(default=HEISENBERG, repr=False)

    @property
    def compactly_supported(self) -> bool:
        return self.support is not None

    def derivative_expression(self, index: Sequence[int] = ()) -> sp.Expr:
        return _derivative(self.expression, check_multi_index(index, self.group), self.group)

    def _regions(self, pts: np.ndarray):
        if self.window is None:
            active = np.ones(pts.shape[:-1], dtype=bool)
            return active, np.zeros_like(active)
        w = _evaluate(self.window, pts)
        active = w < 1.0 - _EDGE
        plateau = np.zeros_like(active)
        if self.has_plateau:
            plateau = w <= _EDGE
            active &= ~plateau
        return active, plateau

    def _masked(self, expr: sp.Expr, pts: np.ndarray, plateau_value: float) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        active, plateau = self._regions(pts)
        out = np.zeros(pts.shape[:-1])
        if np.any(active):
            out[active] = _evaluate(expr, pts[active])
        out[plateau] = plateau_value
        return out

    def evaluate(self, pts: np.ndarray, index: Sequence[int] = ()) -> np.ndarray:
        """在点集 (..., n) 上计算 X_I u"""
        index = check_multi_index(index, self.group)
        value = self.plateau_value if not index else 0.0
        return self._masked(self.derivative_expression(index), pts, value)

    def partial(self, pts: np.ndarray, axis: int) -> np.ndarray:
        """欧氏偏导数 ∂_axis u"""
        expr = sp.diff(self.expression, COORDS[axis])
        return self._masked(expr, pts, 0.0)

    def sample(self, grid: Grid, index: Sequence[int] = ()) -> SampledFunction:
        return SampledFunction(grid, self.evaluate(grid.points, index))

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.evaluate(pts)

    def derived(self, index: Sequence[int]) -> "TestFunction":
        """X_I u 作为新的 TestFunction"""
        index = check_multi_index(index, self.group)
        label = "".join(f"X{i + 1}" for i in index)
        return replace(
            self,
            name=f"{label}({self.name})",
            expression=self.derivative_expression(index),
            plateau_value=self.plateau_value if not index else 0.0,
        )

    def scaled(self, factor: float) -> "TestFunction":
        return replace(
            self,
            name=f"{factor:g}*{self.name}",
            expression=factor * self.expression,
            plateau_value=factor * self.plateau_value,
        )

    def with_affine(self, coefficients: Dict[str, float]) -> "TestFunction":
        """u + c₀ + Σ c_i x_i, 只适用于没有窗口的全局函数"""
        if self.window is not None:
            raise DomainError(f"{self.name} 有窗口, 不能加仿射项")
        affine = sp.Float(coefficients["c0"]) + sum(
            sp.Float(coefficients[f"c{i + 1}"]) * COORDS[i] for i in range(self.group.q)
        )
        return replace(self, name=f"{self.name}+affine", expression=self.expression + affine)

    def _substituted(self, new_coords: Sequence[sp.Expr]) -> Dict[str, sp.Expr]:
        mapping = dict(zip(COORDS, new_coords))
        out = {"expression": self.expression.subs(mapping, simultaneous=True)}
        if self.window is not None:
            out["window"] = self.window.subs(mapping, simultaneous=True)
        return out

    def translated(self, z: GroupPoint) -> "TestFunction":
        """u∘L_z, 即 x ↦ u(z∘x); 支撑球心变为 z⁻¹∘c"""
        moved = self.group.symbolic_compose(z.coords, COORDS)
        support = None
        if self.support is not None:
            support = Ball(z.inverse() * self.support.center, self.support.radius)
        return replace(self, name=f"{self.name}∘L", support=support, **self._substituted(moved))

    def dilated(self, lam: float) -> "TestFunction":
        """u∘D_λ; 支撑球变为 B(D(1/λ)c, R/λ)"""
        if not lam > 0:
            raise DomainError(f"伸缩因子必须为正, 实际 {lam}")
        moved = [c * sp.Float(lam) ** int(a) for c, a in zip(COORDS, self.group.alpha)]
        support = None
        if self.support is not None:
            support = Ball(self.support.center.dilate(1.0 / lam), self.support.radius / lam)
        return replace(self, name=f"{self.name}∘D", support=support, **self._substituted(moved))


def _local_coords(center: GroupPoint, group: CarnotGroup) -> Tuple[sp.Expr, ...]:
    """q = c⁻¹∘x 的符号坐标"""
    if not any(center.coords):
        return COORDS
    return tuple(group.symbolic_compose(center.inverse().coords, COORDS))


def _gauge_quartic_expr(q: Sequence[sp.Expr], group: CarnotGroup, t_stretch: float = 1.0) -> sp.Expr:
    r2 = q[0] ** 2 + q[1] ** 2
    return r2 ** 2 + sp.Float(group.gauge_constant) * (q[2] / sp.Float(t_stretch)) ** 2


def _bump_profile(s: sp.Expr) -> sp.Expr:
    """exp(s/(s−1)): 中心处为 1, s → 1 时所有导数趋于 0"""
    return sp.exp(s / (s - 1))


def gauge_bump(
    radius: float = 1.0,
    center: Optional[GroupPoint] = None,
    group: CarnotGroup = HEISENBERG,
    name: str = "gauge_bump",
) -> TestFunction:
    """
    规范径向鼓包, 支撑在 B(center, radius)

    用光滑的 ρ⁴ 而不是 ρ² 构造, 以保证在中心处 C^∞。
    """
    if not radius > 0:
        raise DomainError(f"半径必须为正, 实际 {radius}")
    center = center or GroupPoint.origin(group)
    q = _local_coords(center, group)
    s = _gauge_quartic_expr(q, group) / sp.Float(radius) ** 4
    return TestFunction(
        name=name,
        expression=_bump_profile(s),
        window=s,
        support=Ball(center, radius),
        params={"radius": radius},
        group=group,
    )


def polynomial_bump(
    polynomial: sp.Expr,
    radius: float = 1.0,
    center: Optional[GroupPoint] = None,
    group: CarnotGroup = HEISENBERG,
    name: str = "poly_bump",
) -> TestFunction:
    """多项式 (以局部坐标 q = c⁻¹∘x 表示) 乘以鼓包"""
    center = center or GroupPoint.origin(group)
    bump = gauge_bump(radius, center, group)
    q = _local_coords(center, group)
    poly = sp.sympify(polynomial).subs(dict(zip(COORDS, q)), simultaneous=True)
    return replace(bump, name=name, expression=poly * bump.expression)


def oscillatory_bump(
    omega: float,
    radius: float = 1.0,
    center: Optional[GroupPoint] = None,
    group: CarnotGroup = HEISENBERG,
) -> TestFunction:
    """sin(ω q_x) 乘以鼓包"""
    center = center or GroupPoint.origin(group)
    bump = gauge_bump(radius, center, group)
    q = _local_coords(center, group)
    return replace(
        bump,
        name=f"osc_bump_w{omega:g}",
        expression=sp.sin(sp.Float(omega) * q[0]) * bump.expression,
        params={"radius": radius, "omega": omega},
    )


def anisotropic_bump(
    stretch: float = 2.0,
    radius: float = 1.0,
    center: Optional[GroupPoint] = None,
    group: CarnotGroup = HEISENBERG,
) -> TestFunction:
    """
    沿 t 方向拉长 stretch 倍的鼓包

    支撑包含在 B(center, √stretch · radius) 内。
    """
    if stretch < 1:
        raise DomainError(f"拉伸倍数必须 ≥ 1, 实际 {stretch}")
    center = center or GroupPoint.origin(group)
    q = _local_coords(center, group)
    s = _gauge_quartic_expr(q, group, t_stretch=stretch) / sp.Float(radius) ** 4
    return TestFunction(
        name=f"aniso_bump_s{stretch:g}",
        expression=_bump_profile(s),
        window=s,
        support=Ball(center, radius * float(np.sqrt(stretch))),
        params={"radius": radius, "stretch": stretch},
        group=group,
    )


def _ramp(tau: sp.Expr) -> sp.Expr:
    """光滑阶梯 ψ(τ): τ ≤ 0 时为 1, τ ≥ 1 时为 0"""
    f_in = sp.exp(-1 / (1 - tau))
    f_out = sp.exp(-1 / tau)
    return f_in / (f_in + f_out)


def cutoff(
    sigma: float,
    radius: float,
    center: Optional[GroupPoint] = None,
    group: CarnotGroup = HEISENBERG,
) -> TestFunction:
    """
    截断函数 φ_σ: 在 B(σr) 上为 1, 支撑在 B(σ'r), σ' = (1+σ)/2

    Raises:
        DomainError: σ ∉ (1/2, 1) 或 r ≤ 0
    """
    if not 0.5 < sigma < 1.0:
        raise DomainError(f"σ 必须在 (1/2, 1) 内, 实际 {sigma}")
    if not radius > 0:
        raise DomainError(f"半径必须为正, 实际 {radius}")
    center = center or GroupPoint.origin(group)
    outer = (1.0 + sigma) / 2.0
    q = _local_coords(center, group)
    s = _gauge_quartic_expr(q, group) / sp.Float(radius) ** 4
    tau = (s - sp.Float(sigma ** 4)) / sp.Float(outer ** 4 - sigma ** 4)
    return TestFunction(
        name=f"cutoff_s{sigma:g}",
        expression=_ramp(tau),
        window=tau,
        support=Ball(center, outer * radius),
        has_plateau=True,
        params={"sigma": sigma, "radius": radius, "outer": outer},
        group=group,
    )


def polynomial(expr, name: str, group: CarnotGroup = HEISENBERG) -> TestFunction:
    """全局多项式 (无紧支撑)"""
    return TestFunction(name=name, expression=sp.sympify(expr), group=group)


def default_corpus(radius: float = 1.0, center: Optional[GroupPoint] = None) -> List[TestFunction]:
    """
    紧支撑测试函数语料

    包含径向鼓包、多项式乘鼓包、ω ∈ {2, 4, 8} 的振荡鼓包以及各向异性鼓包;
    各向异性鼓包的半径缩小以使支撑仍在 B(center, radius) 内。
    """
    return [
        gauge_bump(radius, center),
        polynomial_bump(1 + X + Y ** 2 - 2 * T, radius, center, name="poly_bump"),
        oscillatory_bump(2.0, radius, center),
        oscillatory_bump(4.0, radius, center),
        oscillatory_bump(8.0, radius, center),
        anisotropic_bump(2.0, radius / np.sqrt(2.0), center),
    ]


def harmonic_corpus() -> List[TestFunction]:
    """对 ā = I 调和 (Σ X_i² u = 0) 的多项式"""
    return [
        polynomial(X, "x"),
        polynomial(Y - 2 * X, "y_minus_2x"),
        polynomial(X * Y, "xy"),
        polynomial(X ** 3 - 3 * X * Y ** 2, "harmonic_cubic"),
    ]


def polynomial_corpus() -> List[TestFunction]:
    """检验场与导数公式的多项式"""
    return [
        polynomial(X, "x"),
        polynomial(T, "t"),
        polynomial(X ** 2 + Y ** 2, "x2_plus_y2"),
        polynomial(X ** 3, "x_cubed"),
        polynomial(X * T - Y ** 2, "xt_minus_y2"),
    ]


def corpus_by_name(name: str, radius: float = 1.0) -> List[TestFunction]:
    corpora = {
        "default": lambda: default_corpus(radius),
        "harmonic": harmonic_corpus,
        "polynomial": polynomial_corpus,
    }
    if name not in corpora:
        raise DomainError(f"未知语料 '{name}', 可选: {', '.join(corpora)}")
    return corpora[name]()
