from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np

from carnot_lab.config import current_settings
from carnot_lab.core.group import HEISENBERG, Ball, CarnotGroup, GroupPoint
from carnot_lab.core.grid import Grid, SampledFunction
from carnot_lab.exceptions.custom_exceptions import DegenerateInputError, DomainError, EmptyBallError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BallLattice:
    """
    有限球族的离散化: 球心取网格节点 (步长 stride), 半径取几何序列

    大半径的球心步长自动放宽为 max(stride, r/(4h)), 以控制球族的总节点数。
    """

    stride: int
    radii: Tuple[float, ...]

    def __post_init__(self):
        radii = tuple(float(r) for r in self.radii)
        if not radii:
            raise DomainError("球格的半径集合不能为空")
        if any(r <= 0 for r in radii):
            raise DomainError("球格半径必须为正")
        if list(radii) != sorted(radii):
            raise DomainError("球格半径必须递增")
        if self.stride < 1:
            raise DomainError(f"球心步长必须 ≥ 1, 实际 {self.stride}")
        object.__setattr__(self, "radii", radii)

    @classmethod
    def geometric(cls, r_min: float, r_max: float, ratio: float = None, stride: int = None) -> "BallLattice":
        """r_min · ratio^k ≤ r_max, 并补上 r_max 本身"""
        ratio = ratio or current_settings().lattice_ratio
        stride = stride or current_settings().lattice_stride
        if ratio <= 1:
            raise DomainError(f"公比必须 > 1, 实际 {ratio}")
        if r_max < r_min:
            raise DomainError(f"最大半径 {r_max:g} 小于最小半径 {r_min:g}")
        radii = []
        r = r_min
        while r < r_max * (1 - 1e-9):
            radii.append(r)
            r *= ratio
        radii.append(r_max)
        return cls(stride=stride, radii=tuple(radii))

    @classmethod
    def for_grid(
        cls,
        grid: Grid,
        r_max: float,
        ratio: float = None,
        stride: int = None,
        min_cells: float = None,
    ) -> "BallLattice":
        """最小半径为 min_cells 个水平步长"""
        min_cells = min_cells or current_settings().lattice_min_cells
        h = float(np.max(grid.spacing[: grid.group.q]))
        return cls.geometric(min(min_cells * h, r_max), r_max, ratio, stride)

    def refined(self) -> "BallLattice":
        """更密的球格: 半径集合加入几何中点, 球心步长减半"""
        mids = [np.sqrt(a * b) for a, b in zip(self.radii, self.radii[1:])]
        return BallLattice(max(1, self.stride // 2), tuple(sorted(set(self.radii) | set(mids))))

    def center_stride(self, radius: float, spacing: float) -> int:
        return max(self.stride, int(radius / (4.0 * spacing)))


@dataclass(frozen=True)
class MaximalConfig:
    lattice: BallLattice
    gamma: float = field(default_factory=lambda: current_settings().fefferman_stein_gamma)
    p_values: Tuple[float, ...] = field(default_factory=lambda: tuple(current_settings().default_p_values))

    def __post_init__(self):
        if not self.gamma > 1:
            raise DomainError(f"γ 必须 > 1, 实际 {self.gamma}")


@dataclass(frozen=True)
class DomainChain:
    """
    区域链 Ω_m = B(0, R0(1 + growth·m)), ε_m = R0·margin

    growth > 2·margin 时 2ε_m 邻域的嵌套由规范的三角不等式保证。
    """

    base_radius: float = field(default_factory=lambda: current_settings().chain_base_radius)
    growth: float = field(default_factory=lambda: current_settings().chain_growth)
    margin: float = field(default_factory=lambda: current_settings().chain_margin)
    group: CarnotGroup = field(default=HEISENBERG, compare=False, repr=False)

    def __post_init__(self):
        if self.base_radius <= 0 or self.growth <= 0 or self.margin <= 0:
            raise DomainError("区域链参数必须为正")

    def radius(self, m: int) -> float:
        if m < 0:
            raise DomainError(f"层号必须 ≥ 0, 实际 {m}")
        return self.base_radius * (1.0 + self.growth * m)

    def domain(self, m: int) -> Ball:
        return Ball.at_origin(self.radius(m), self.group)

    def domains(self, levels: int) -> List[Ball]:
        return [self.domain(m) for m in range(levels)]

    def epsilon(self, m: int) -> float:
        self.radius(m)
        return self.base_radius * self.margin

    def check_nesting(self, m: int, samples: int = 2000, rng: Optional[np.random.Generator] = None) -> bool:
        """抽样检查 {x : d(x, y) < 2ε_m, y ∈ Ω_m} ⊂ Ω_{m+1}"""
        rng = rng or np.random.default_rng(current_settings().seed)
        group = self.group

        def on_sphere(radius: float, count: int) -> np.ndarray:
            raw = rng.normal(size=(count, group.n))
            return group.dilate(radius, raw / group.gauge_norm(raw)[:, None] ** group.alpha)

        y = on_sphere(self.radius(m) * (1 - 1e-12), samples)
        w = on_sphere(2.0 * self.epsilon(m) * (1 - 1e-12), samples)
        reach = group.gauge_norm(group.compose(y, w))
        return bool(np.all(reach < self.radius(m + 1)))


class BallFamily:
    """
    球格在一个网格上枚举出的球

    触碰盒子边界的球被舍弃而不是截断。球内节点下标拼接存储,
    平均值与平均振幅用 bincount 一次算出。
    """

    def __init__(
        self,
        grid: Grid,
        lattice: BallLattice,
        domain: Optional[Ball] = None,
        max_radius: Optional[float] = None,
    ):
        self.grid = grid
        self.lattice = lattice
        group = grid.group
        h = float(np.min(grid.spacing[: group.q]))

        centers, radii, chunks = [], [], []
        for radius in lattice.radii:
            if max_radius is not None and radius > max_radius * (1 + 1e-12):
                continue
            step = lattice.center_stride(radius, h)
            axes = [ax[::step] for ax in grid.axes]
            pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, group.n)
            if domain is not None:
                pts = pts[domain.contains(pts)]
            for p in pts:
                ball = Ball(GroupPoint(tuple(p), group), radius)
                if not grid.contains_ball(ball):
                    continue
                idx = grid.ball_indices(ball, require_inside=False)
                if idx.size == 0:
                    continue
                centers.append(p)
                radii.append(radius)
                chunks.append(idx.astype(np.int64))

        self.centers = np.asarray(centers, dtype=float).reshape(-1, group.n)
        self.radii = np.asarray(radii, dtype=float)
        self.sizes = np.asarray([c.size for c in chunks], dtype=np.int64)
        self.indices = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
        self.ball_ids = np.repeat(np.arange(len(chunks)), self.sizes)
        logger.debug(f"球族: {len(self)} 个球, {self.indices.size} 个节点条目")

    def __len__(self) -> int:
        return int(self.radii.size)

    def _flat(self, f: SampledFunction) -> np.ndarray:
        if f.grid != self.grid:
            raise DomainError("函数与球族不在同一网格上")
        return f.values.ravel()

    def averages(self, f: SampledFunction) -> np.ndarray:
        values = self._flat(f)[self.indices]
        return np.bincount(self.ball_ids, weights=values, minlength=len(self)) / self.sizes

    def oscillations(self, f: SampledFunction) -> np.ndarray:
        """每个球上的平均振幅 avg_B |f − f_B|"""
        values = self._flat(f)[self.indices]
        means = self.averages(f)
        dev = np.abs(values - means[self.ball_ids])
        return np.bincount(self.ball_ids, weights=dev, minlength=len(self)) / self.sizes

    def containing(self, point: np.ndarray) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        return self.grid.group.quasi_distance(point, self.centers) < self.radii

    def scatter_max(self, per_ball: np.ndarray) -> SampledFunction:
        """每个节点取所有包含它的球上的最大值 (无球时为 0)"""
        out = np.zeros(self.grid.size)
        np.maximum.at(out, self.indices, per_ball[self.ball_ids])
        return SampledFunction(self.grid, out.reshape(self.grid.shape))

    def covered(self) -> np.ndarray:
        """被至少一个球覆盖的节点掩码"""
        mask = np.zeros(self.grid.size, dtype=bool)
        mask[self.indices] = True
        return mask.reshape(self.grid.shape)


@lru_cache(maxsize=32)
def ball_family(
    grid: Grid,
    lattice: BallLattice,
    domain: Optional[Ball] = None,
    max_radius: Optional[float] = None,
) -> BallFamily:
    return BallFamily(grid, lattice, domain, max_radius)


def _level_family(grid: Grid, m: int, chain: DomainChain, cfg: MaximalConfig) -> BallFamily:
    return ball_family(grid, cfg.lattice, chain.domain(m), chain.epsilon(m))


def ball_average(f: SampledFunction, b: Ball) -> float:
    """
    球上的求积平均

    Raises:
        BallOutsideGridError: 球不在网格内
        EmptyBallError: 半径低于网格分辨率
    """
    idx = f.grid.ball_indices(b)
    if idx.size == 0:
        raise EmptyBallError(b.radius)
    return f.average(idx)


def _point_array(x, grid: Grid) -> np.ndarray:
    return x.as_array() if isinstance(x, GroupPoint) else grid.group.check_points(x)


def hl_maximal(f: SampledFunction, x, cfg: MaximalConfig, family: Optional[BallFamily] = None) -> float:
    """
    Hardy–Littlewood 极大函数 Mf(x): 含 x 的球格球上 |f| 平均的最大值

    Raises:
        DomainError: 没有球格球包含 x
    """
    family = family or ball_family(f.grid, cfg.lattice)
    hits = family.containing(_point_array(x, f.grid))
    if not np.any(hits):
        raise DomainError(f"没有球格中的球包含点 {tuple(_point_array(x, f.grid))}")
    return float(np.max(family.averages(abs(f))[hits]))


def hl_maximal_field(f: SampledFunction, cfg: MaximalConfig, family: Optional[BallFamily] = None) -> SampledFunction:
    family = family or ball_family(f.grid, cfg.lattice)
    return family.scatter_max(family.averages(abs(f)))


def local_sharp_maximal(f: SampledFunction, x, m: int, chain: DomainChain, cfg: MaximalConfig) -> float:
    """
    局部尖锐极大函数: 球心在 Ω_m, 半径 ≤ ε_m 且含 x 的球上平均振幅的最大值

    Raises:
        DomainError: x ∉ Ω_m 或没有可用的球
    """
    point = _point_array(x, f.grid)
    if not chain.domain(m).contains(point):
        raise DomainError(f"点 {tuple(point)} 不在 Ω_{m} 内")
    family = _level_family(f.grid, m, chain, cfg)
    hits = family.containing(point)
    if not np.any(hits):
        raise DomainError(f"没有球格中的球包含点 {tuple(point)}")
    return float(np.max(family.oscillations(f)[hits]))


def sharp_maximal_field(f: SampledFunction, m: int, chain: DomainChain, cfg: MaximalConfig) -> SampledFunction:
    family = _level_family(f.grid, m, chain, cfg)
    return family.scatter_max(family.oscillations(f))


def vmo_modulus(f: SampledFunction, m: int, r: float, chain: DomainChain, cfg: MaximalConfig) -> float:
    """
    η_{m,f}(r): 球心在 Ω_m, 半径 ≤ r 的球上平均振幅的上确界

    Raises:
        DomainError: r > ε_m
    """
    eps = chain.epsilon(m)
    if r > eps * (1 + 1e-12):
        raise DomainError(f"r = {r:g} 超过 ε_{m} = {eps:g}")
    if np.ptp(f.values) == 0:
        return 0.0
    family = _level_family(f.grid, m, chain, cfg)
    selected = family.radii <= r * (1 + 1e-12)
    if not np.any(selected):
        return 0.0
    return float(np.max(family.oscillations(f)[selected]))


def a_sharp(a, m: int, r: float, chain: DomainChain, cfg: MaximalConfig, grid: Grid) -> float:
    """a♯_{m,r} = Σ_{i,j} η_{m,a_ij}(r)"""
    samples = a.sample(grid)
    q = samples.shape[-1]
    return float(
        sum(
            vmo_modulus(SampledFunction(grid, samples[..., i, j]), m, r, chain, cfg)
            for i in range(q)
            for j in range(q)
        )
    )


def fefferman_stein_ratio(
    f: SampledFunction,
    radius: float,
    p: float,
    cfg: MaximalConfig,
    chain: DomainChain,
    m: int = 0,
    center: Optional[GroupPoint] = None,
) -> float:
    """
    ‖f‖_{L^p(B_R)} / ‖f♯_{Ω_{m+2},Ω_{m+3}}‖_{L^p(B_{γR})}

    Raises:
        DegenerateInputError: f ≡ 0 或分母为零
        DomainError: f 的平均值不为零
    """
    scale = float(np.max(np.abs(f.values)))
    if scale == 0.0:
        raise DegenerateInputError("f ≡ 0, Fefferman–Stein 比值无定义")
    center = center or GroupPoint.origin(f.grid.group)
    inner = f.grid.ball_mask(Ball(center, radius))
    outer = f.grid.ball_mask(Ball(center, cfg.gamma * radius))
    l1 = abs(f).integrate()
    if abs(f.integrate()) > 1e-6 * l1:
        raise DomainError("f 的积分不为零")
    sharp = sharp_maximal_field(f, m + 2, chain, cfg)
    denominator = sharp.lp_norm(p, outer)
    if denominator == 0.0:
        raise DegenerateInputError("f♯ 的范数为零")
    return f.lp_norm(p, inner) / denominator


def sample_nodes(
    domain: Ball,
    grid: Grid,
    count: int,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """在 domain 内随机选取至多 count 个网格节点, 返回升序的扁平下标"""
    rng = rng or np.random.default_rng(current_settings().seed)
    idx = grid.ball_indices(domain, require_inside=False)
    if idx.size == 0:
        raise DomainError("区域内没有网格节点")
    return np.sort(rng.choice(idx, size=min(count, idx.size), replace=False))


def maximal_table(
    f: SampledFunction,
    m: int,
    chain: DomainChain,
    cfg: MaximalConfig,
    count: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[List[str], np.ndarray]:
    """
    Ω_m 内节点的 (x, y, t, Mf, f♯) 表

    给定 count 时只取随机抽样的 count 个节点。
    """
    hl = hl_maximal_field(f, cfg).values.ravel()
    sharp = sharp_maximal_field(f, m, chain, cfg).values.ravel()
    if count is None:
        nodes = np.flatnonzero(chain.domain(m).contains(f.grid.points).ravel())
    else:
        nodes = sample_nodes(chain.domain(m), f.grid, count, rng)
    pts = f.grid.points.reshape(-1, f.grid.group.n)[nodes]
    rows = np.column_stack([pts, hl[nodes], sharp[nodes]])
    return ["x", "y", "t", "Mf", "f_sharp"], rows
