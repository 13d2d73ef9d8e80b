from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
import sympy as sp
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from carnot_lab.config import current_settings
from carnot_lab.exceptions.custom_exceptions import (
    DimensionMismatchError,
    DomainError,
)
from carnot_lab.schemas.group import GroupDescriptor

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence[float]]


class CarnotGroup(ABC):
    """
    Carnot 群的抽象描述

    点用形如 (..., n) 的数组表示; 所有运算都对前导维度向量化。
    """

    def __init__(self, descriptor: GroupDescriptor):
        self.descriptor = descriptor
        self.name = descriptor.name
        self.n = descriptor.n
        self.q = descriptor.q
        self.s = descriptor.s
        self.alpha = np.asarray(descriptor.alpha, dtype=float)
        self.Q = descriptor.homogeneous_dimension
        self.gauge_constant = descriptor.gauge_constant

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(name={self.name!r}, Q={self.Q})"

    # 子类必须实现的群结构
    @abstractmethod
    def compose(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """群运算 a∘b"""

    @abstractmethod
    def inverse(self, a: np.ndarray) -> np.ndarray:
        """逆元 a⁻¹"""

    @abstractmethod
    def gauge_quartic(self, a: np.ndarray) -> np.ndarray:
        """齐次范数的光滑幂 ρ(a)^(2s), 在原点光滑"""

    @abstractmethod
    def field_matrix(self, points: np.ndarray) -> np.ndarray:
        """生成元系数: 返回 (..., q, n), X_i = Σ_k c[i, k] ∂_k"""

    @abstractmethod
    def bracket(self, i: int, j: int) -> np.ndarray:
        """[X_i, X_j] 在坐标基下的 (常)系数"""

    @abstractmethod
    def symbolic_field(self, i: int, expr: sp.Expr, coords: Tuple[sp.Symbol, ...]) -> sp.Expr:
        """对 sympy 表达式作用 X_i"""

    @abstractmethod
    def symbolic_compose(self, a: Sequence, b: Sequence) -> Tuple:
        """对标量或 sympy 表达式序列的群运算"""

    @abstractmethod
    def ball_bounding_box(self, center: np.ndarray, radius: float) -> Tuple[np.ndarray, np.ndarray]:
        """包含 B(center, radius) 的坐标盒子"""

    @abstractmethod
    def sphere_chart(self, u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """单位规范球面的参数化: 返回点、∂_u 与 ∂_v 切向量"""

    @property
    @abstractmethod
    def sphere_chart_domain(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        """sphere_chart 的参数范围"""

    # 通用运算
    def check_points(self, a: ArrayLike) -> np.ndarray:
        """转换为数组并检查维数与有限性"""
        arr = np.asarray(a, dtype=float)
        if arr.ndim == 0 or arr.shape[-1] != self.n:
            raise DimensionMismatchError(self.n, arr.shape)
        return arr

    def dilate(self, lam: float, a: np.ndarray) -> np.ndarray:
        """伸缩 D(λ)a"""
        if not np.all(np.asarray(lam) > 0):
            raise DomainError(f"伸缩因子必须为正, 实际 {lam}")
        return a * np.power(lam, self.alpha)

    def gauge_norm(self, a: np.ndarray) -> np.ndarray:
        """齐次范数 ρ(a)"""
        return np.power(self.gauge_quartic(a), 1.0 / (2 * self.s))

    def quasi_distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """拟距离 d(a, b) = ρ(b⁻¹∘a)"""
        return self.gauge_norm(self.compose(self.inverse(b), a))

    def ball_measure(self, radius: float) -> float:
        """|B(x, r)| = |B(0, 1)| r^Q"""
        return self.unit_ball_volume * radius ** self.Q

    @cached_property
    def unit_ball_volume(self) -> float:
        """单位球体积, 在最细网格上用单元中心求积一次并缓存"""
        cells = 2 * current_settings().cells_per_ball * 2
        lo, hi = self.ball_bounding_box(np.zeros(self.n), 1.0)
        h = (hi - lo) / cells
        axes = [lo[k] + h[k] * (np.arange(cells) + 0.5) for k in range(self.n)]
        count = 0
        # 逐片计算以控制内存
        for x0 in axes[0]:
            mesh = np.meshgrid(np.array([x0]), *axes[1:], indexing="ij")
            pts = np.stack(mesh, axis=-1)
            count += int(np.count_nonzero(self.gauge_quartic(pts) < 1.0))
        volume = count * float(np.prod(h))
        logger.info(f"单位球体积 (求积): {volume:.6f}")
        return volume


class HeisenbergGroup(CarnotGroup):
    """
    Heisenberg 群 H¹

    群律 (x,y,t)∘(x',y',t') = (x+x', y+y', t+t'+½(xy'−yx')),
    X₁ = ∂_x − (y/2)∂_t, X₂ = ∂_y + (x/2)∂_t, [X₁, X₂] = ∂_t。
    """

    def __init__(self, gauge_constant: Optional[float] = None):
        super().__init__(
            GroupDescriptor(
                name="heisenberg",
                n=3,
                q=2,
                s=2,
                alpha=[1, 1, 2],
                gauge_constant=gauge_constant or current_settings().gauge_constant,
            )
        )

    @staticmethod
    def _law(ax, ay, at, bx, by, bt):
        return ax + bx, ay + by, at + bt + 0.5 * (ax * by - ay * bx)

    def compose(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = self.check_points(a)
        b = self.check_points(b)
        x, y, t = self._law(a[..., 0], a[..., 1], a[..., 2], b[..., 0], b[..., 1], b[..., 2])
        return np.stack(np.broadcast_arrays(x, y, t), axis=-1)

    def inverse(self, a: np.ndarray) -> np.ndarray:
        return -self.check_points(a)

    def gauge_quartic(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        r2 = a[..., 0] ** 2 + a[..., 1] ** 2
        return r2 ** 2 + self.gauge_constant * a[..., 2] ** 2

    def field_matrix(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        coef = np.zeros(points.shape[:-1] + (2, 3))
        coef[..., 0, 0] = 1.0
        coef[..., 0, 2] = -0.5 * points[..., 1]
        coef[..., 1, 1] = 1.0
        coef[..., 1, 2] = 0.5 * points[..., 0]
        return coef

    def bracket(self, i: int, j: int) -> np.ndarray:
        if {i, j} - {0, 1}:
            raise DomainError(f"生成元下标越界: ({i}, {j})")
        sign = {(0, 1): 1.0, (1, 0): -1.0}.get((i, j), 0.0)
        return np.array([0.0, 0.0, sign])

    def symbolic_field(self, i: int, expr: sp.Expr, coords: Tuple[sp.Symbol, ...]) -> sp.Expr:
        x, y, t = coords
        if i == 0:
            return sp.diff(expr, x) - y / 2 * sp.diff(expr, t)
        if i == 1:
            return sp.diff(expr, y) + x / 2 * sp.diff(expr, t)
        raise DomainError(f"生成元下标越界: {i}")

    def symbolic_compose(self, a: Sequence, b: Sequence) -> Tuple:
        return self._law(*a, *b)

    def ball_bounding_box(self, center: np.ndarray, radius: float) -> Tuple[np.ndarray, np.ndarray]:
        center = np.asarray(center, dtype=float)
        horizontal = math.hypot(center[0], center[1])
        # p = c∘q, ρ(q) < r: |q_x|,|q_y| < r, |q_t| < r²/√c
        dt = radius ** 2 / math.sqrt(self.gauge_constant) + 0.5 * radius * horizontal
        half = np.array([radius, radius, dt])
        return center - half, center + half

    def sphere_chart(self, u: np.ndarray, v: np.ndarray):
        # r² = cos u, √c·t = sin u, u ∈ [−π/2, π/2], v 为水平角
        sqc = math.sqrt(self.gauge_constant)
        cu = np.clip(np.cos(u), 0.0, None)
        r = np.sqrt(cu)
        point = np.stack([r * np.cos(v), r * np.sin(v), np.sin(u) / sqc], axis=-1)
        # r r' = −sin(u)/2, 用它消去极点处的 1/r
        rr = -0.5 * np.sin(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            dr = np.where(r > 0, rr / np.where(r > 0, r, 1.0), 0.0)
        du = np.stack([dr * np.cos(v), dr * np.sin(v), np.cos(u) / sqc], axis=-1)
        dv = np.stack([-r * np.sin(v), r * np.cos(v), np.zeros_like(u)], axis=-1)
        return point, du, dv

    @property
    def sphere_chart_domain(self):
        return (-math.pi / 2, math.pi / 2), (0.0, 2 * math.pi)

    @property
    def analytic_unit_ball_volume(self) -> float:
        """|B(0,1)| 的解析值 π²/(2√c), c=16 时为 π²/8"""
        return math.pi ** 2 / (2 * math.sqrt(self.gauge_constant))


HEISENBERG = HeisenbergGroup()


@dataclass(frozen=True)
class GroupPoint:
    """带有群语义的点"""

    coords: Tuple[float, ...]
    group: CarnotGroup = field(default=HEISENBERG, compare=False, repr=False)

    def __post_init__(self):
        coords = tuple(float(c) for c in np.ravel(self.coords))
        if len(coords) != self.group.n:
            raise DimensionMismatchError(self.group.n, len(coords))
        if not all(math.isfinite(c) for c in coords):
            raise DomainError(f"坐标必须有限: {coords}")
        object.__setattr__(self, "coords", coords)

    @classmethod
    def origin(cls, group: CarnotGroup = HEISENBERG) -> "GroupPoint":
        return cls(tuple([0.0] * group.n), group)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    def compose(self, other: "GroupPoint") -> "GroupPoint":
        return compose(self, other)

    def __mul__(self, other: "GroupPoint") -> "GroupPoint":
        return compose(self, other)

    def inverse(self) -> "GroupPoint":
        return inverse(self)

    def dilate(self, lam: float) -> "GroupPoint":
        return dilate(lam, self)

    def norm(self) -> float:
        return gauge_norm(self)


@dataclass(frozen=True)
class Ball:
    """拟距离球 B(center, radius)"""

    center: GroupPoint
    radius: float

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise DomainError(f"球半径必须为正, 实际 {self.radius}")

    @classmethod
    def at_origin(cls, radius: float, group: CarnotGroup = HEISENBERG) -> "Ball":
        return cls(GroupPoint.origin(group), radius)

    @property
    def group(self) -> CarnotGroup:
        return self.center.group

    @property
    def volume(self) -> float:
        return self.group.ball_measure(self.radius)

    def scaled(self, factor: float) -> "Ball":
        """同心放大 kB"""
        return Ball(self.center, self.radius * factor)

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.group.ball_bounding_box(self.center.as_array(), self.radius)

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.group.quasi_distance(points, self.center.as_array()) < self.radius


def _same_group(a: GroupPoint, b: GroupPoint) -> CarnotGroup:
    if a.group is not b.group:
        raise DimensionMismatchError(a.group.n, f"{b.group.name} 中的点")
    return a.group


def compose(a: GroupPoint, b: GroupPoint) -> GroupPoint:
    """a∘b"""
    group = _same_group(a, b)
    return GroupPoint(tuple(group.compose(a.as_array(), b.as_array())), group)


def inverse(a: GroupPoint) -> GroupPoint:
    """a⁻¹"""
    return GroupPoint(tuple(a.group.inverse(a.as_array())), a.group)


def dilate(lam: float, a: GroupPoint) -> GroupPoint:
    """D(λ)a"""
    return GroupPoint(tuple(a.group.dilate(lam, a.as_array())), a.group)


def gauge_norm(a: GroupPoint) -> float:
    """Korányi 规范 ρ(a)"""
    return float(a.group.gauge_norm(a.as_array()))


def quasi_distance(a: GroupPoint, b: GroupPoint) -> float:
    """d(a, b) = ρ(b⁻¹∘a)"""
    group = _same_group(a, b)
    return float(group.quasi_distance(a.as_array(), b.as_array()))


def ball_volume(ball: Ball, grid) -> float:
    """
    球在网格上的求积测度

    半径低于网格分辨率时离散球可能为空, 此时返回 0 (或单个单元的体积)。

    Raises:
        BallOutsideGridError: 球不在网格盒子内
    """
    mask = grid.ball_mask(ball)
    return float(np.count_nonzero(mask)) * grid.cell_volume


# 水平方向的格点位移 (8 个方向 + 8 个"马步"方向以减小度量误差)
_HORIZONTAL_STEPS = [
    (1, 0), (0, 1), (1, 1), (1, -1),
    (1, 2), (2, 1), (1, -2), (2, -1),
]


def _cc_axis(values: Tuple[float, float], resolution: int, fallback: float):
    """构造一条坐标轴, 使两个端点都落在节点上"""
    lo_v, hi_v = min(values), max(values)
    span = hi_v - lo_v
    pad = resolution // 4
    interior = resolution - 1 - 2 * pad
    if span > 0:
        h = span / interior
    else:
        h = fallback / interior
    lower = lo_v - pad * h
    if span == 0:
        lower -= 0.5 * interior * h
        lower = lo_v - round((lo_v - lower) / h) * h
    return lower, h


def cc_distance_approx(
    a: GroupPoint,
    b: GroupPoint,
    resolution: int = 32,
    box: Optional[Tuple[ArrayLike, ArrayLike]] = None,
) -> float:
    """
    Carnot–Carathéodory 距离的图搜索近似

    在网格上建图, 边沿水平方向右平移 p∘(δx, δy, 0), 垂直坐标取最近节点;
    只用于标定规范距离与 CC 距离的等价常数。

    Args:
        a, b: 端点
        resolution: 每个坐标轴上的节点数 (≥ 16)
        box: 可选的 (lower, upper) 盒子; 缺省时围绕两点自动构造

    Raises:
        DomainError: 分辨率过低, 点在盒子外, 或图中不可达
    """
    group = _same_group(a, b)
    if resolution < 16:
        raise DomainError(f"分辨率至少为 16, 实际 {resolution}")
    pa, pb = a.as_array(), b.as_array()
    if np.allclose(pa, pb, rtol=0, atol=1e-15):
        return 0.0

    if box is None:
        scale = max(float(group.quasi_distance(pa, pb)), 1e-12)
        lowers, steps = [], []
        for k in range(group.n):
            fallback = scale ** group.alpha[k]
            lower, h = _cc_axis((pa[k], pb[k]), resolution, 2.0 * fallback)
            lowers.append(lower)
            steps.append(h)
        lower = np.array(lowers)
        h = np.array(steps)
    else:
        lower = np.asarray(box[0], dtype=float)
        upper = np.asarray(box[1], dtype=float)
        if np.any(pa < lower) or np.any(pa > upper) or np.any(pb < lower) or np.any(pb > upper):
            raise DomainError("端点不在声明的盒子内")
        h = (upper - lower) / (resolution - 1)

    shape = (resolution,) * group.n
    size = resolution ** group.n
    index = np.indices(shape).reshape(group.n, -1).T
    points = lower + index * h

    rows, cols, weights = [], [], []
    for dx, dy in _HORIZONTAL_STEPS:
        for sx, sy in ((dx, dy), (-dx, -dy)):
            step = np.zeros(group.n)
            step[0], step[1] = sx * h[0], sy * h[1]
            target = group.compose(points, step)
            tidx = np.rint((target - lower) / h).astype(np.int64)
            valid = np.all((tidx >= 0) & (tidx < resolution), axis=1)
            rows.append(np.nonzero(valid)[0])
            cols.append(np.ravel_multi_index(tidx[valid].T, shape))
            weights.append(np.full(int(valid.sum()), math.hypot(step[0], step[1])))

    graph = csr_matrix(
        (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    )
    src = np.ravel_multi_index(tuple(np.rint((pa - lower) / h).astype(np.int64)), shape)
    dst = np.ravel_multi_index(tuple(np.rint((pb - lower) / h).astype(np.int64)), shape)
    dist = dijkstra(graph, directed=True, indices=int(src))[int(dst)]
    if not np.isfinite(dist):
        raise DomainError("分辨率过低, 目标点在图中不可达")
    return float(dist)


def estimate_quasi_triangle_constant(
    group: CarnotGroup = HEISENBERG,
    samples: int = 10_000,
    rng: Optional[np.random.Generator] = None,
    scale: float = 10.0,
) -> float:
    """测量 ρ(a∘b) ≤ K(ρ(a)+ρ(b)) 中的 K"""
    rng = rng or np.random.default_rng(current_settings().seed)
    a = rng.uniform(-scale, scale, size=(samples, group.n))
    b = rng.uniform(-scale, scale, size=(samples, group.n))
    ratio = group.gauge_norm(group.compose(a, b)) / (group.gauge_norm(a) + group.gauge_norm(b))
    return float(np.max(ratio))


def estimate_equivalence_constant(
    group: CarnotGroup = HEISENBERG,
    samples: int = 10_000,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """测量性质 (iv): (1/c)|y| ≤ ρ(y) ≤ c|y|^(1/s), ρ(y) ≤ 1"""
    rng = rng or np.random.default_rng(current_settings().seed)
    y = rng.uniform(-1.0, 1.0, size=(samples, group.n))
    rho = group.gauge_norm(y)
    y = y[(rho <= 1.0) & (rho > 0)]
    rho = group.gauge_norm(y)
    euclid = np.linalg.norm(y, axis=-1)
    lower = np.max(euclid / rho)
    upper = np.max(rho / euclid ** (1.0 / group.s))
    return float(max(lower, upper))
