from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Tuple, Union
import logging

import numpy as np
from scipy.ndimage import map_coordinates

from carnot_lab.config import current_settings
from carnot_lab.core.group import HEISENBERG, Ball, CarnotGroup
from carnot_lab.exceptions.custom_exceptions import (
    ArtifactWriteError,
    BallOutsideGridError,
    DimensionMismatchError,
    DomainError,
    EmptyBallError,
)

logger = logging.getLogger(__name__)

_DUMP_MAGIC = "# carnot-grid v1"
_DATA_MARKER = b"\ndata\n"


@dataclass(frozen=True)
class Grid:
    """
    盒子上的均匀网格

    节点 i 位于 lower + i·h, h = (upper − lower)/(shape − 1); 求积权重为 Π h_k。
    """

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    shape: Tuple[int, ...]
    group: CarnotGroup = field(default=HEISENBERG, compare=False, repr=False)

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        shape = tuple(int(v) for v in self.shape)
        n = self.group.n
        if not (len(lower) == len(upper) == len(shape) == n):
            raise DimensionMismatchError(n, (len(lower), len(upper), len(shape)))
        if any(c < 3 for c in shape):
            raise DomainError(f"每个坐标轴至少需要 3 个节点, 实际 {shape}")
        if any(hi <= lo for lo, hi in zip(lower, upper)):
            raise DomainError("网格盒子的上界必须大于下界")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def around_ball(
        cls,
        ball: Ball,
        cells: Optional[int] = None,
        margin_cells: int = 3,
    ) -> "Grid":
        """
        覆盖球的包围盒的网格, 每个坐标轴 cells 个单元加两侧 margin_cells 个单元
        """
        cells = cells or current_settings().cells_per_ball
        lo, hi = ball.bounding_box()
        h = (hi - lo) / cells
        lower = lo - margin_cells * h
        upper = hi + margin_cells * h
        shape = (cells + 1 + 2 * margin_cells,) * ball.group.n
        return cls(tuple(lower), tuple(upper), shape, ball.group)

    @classmethod
    def covering(cls, lower, upper, cells: int, group: CarnotGroup = HEISENBERG) -> "Grid":
        """给定盒子, 每个坐标轴 cells 个单元"""
        return cls(tuple(lower), tuple(upper), (cells + 1,) * group.n, group)

    @cached_property
    def lower_array(self) -> np.ndarray:
        return np.asarray(self.lower)

    @cached_property
    def upper_array(self) -> np.ndarray:
        return np.asarray(self.upper)

    @cached_property
    def spacing(self) -> np.ndarray:
        return (self.upper_array - self.lower_array) / (np.asarray(self.shape) - 1)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def axes(self) -> Tuple[np.ndarray, ...]:
        return tuple(
            self.lower[k] + self.spacing[k] * np.arange(self.shape[k]) for k in range(self.group.n)
        )

    @cached_property
    def points(self) -> np.ndarray:
        """所有节点坐标, 形状 shape + (n,)"""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def refined(self, factor: int = 2) -> "Grid":
        """同一盒子上步长缩小 factor 倍"""
        shape = tuple((c - 1) * factor + 1 for c in self.shape)
        return Grid(self.lower, self.upper, shape, self.group)

    def contains_box(self, lo: np.ndarray, hi: np.ndarray, tol: float = 1e-12) -> bool:
        return bool(np.all(lo >= self.lower_array - tol) and np.all(hi <= self.upper_array + tol))

    def contains_ball(self, ball: Ball) -> bool:
        lo, hi = ball.bounding_box()
        return self.contains_box(lo, hi)

    def contains_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.all((pts >= self.lower_array - 1e-12) & (pts <= self.upper_array + 1e-12), axis=-1)

    def _ball_window(self, ball: Ball) -> Tuple[slice, ...]:
        lo, hi = ball.bounding_box()
        start = np.ceil((lo - self.lower_array) / self.spacing - 1e-9).astype(int)
        stop = np.floor((hi - self.lower_array) / self.spacing + 1e-9).astype(int) + 1
        start = np.clip(start, 0, np.asarray(self.shape))
        stop = np.clip(stop, 0, np.asarray(self.shape))
        return tuple(slice(int(a), int(b)) for a, b in zip(start, stop))

    def ball_indices(self, ball: Ball, require_inside: bool = True) -> np.ndarray:
        """
        球内节点的扁平下标 (C 顺序)

        Raises:
            BallOutsideGridError: require_inside 且球不在盒子内
        """
        if require_inside and not self.contains_ball(ball):
            raise BallOutsideGridError(ball.center.coords, ball.radius)
        window = self._ball_window(ball)
        if any(s.stop <= s.start for s in window):
            return np.zeros(0, dtype=np.int64)
        sub = self.points[window]
        inside = ball.contains(sub)
        local = np.nonzero(inside)
        full = tuple(idx + s.start for idx, s in zip(local, window))
        return np.ravel_multi_index(full, self.shape)

    def ball_mask(self, ball: Ball, require_inside: bool = True) -> np.ndarray:
        """球内节点的布尔掩码, 形状与网格一致"""
        mask = np.zeros(self.size, dtype=bool)
        mask[self.ball_indices(ball, require_inside)] = True
        return mask.reshape(self.shape)

    def distance_from(self, center: np.ndarray) -> np.ndarray:
        """每个节点到 center 的拟距离"""
        return self.group.quasi_distance(self.points, np.asarray(center, dtype=float))

    def nearest_index(self, point: np.ndarray) -> Tuple[int, ...]:
        """最近节点的多重下标"""
        idx = np.rint((np.asarray(point, dtype=float) - self.lower_array) / self.spacing).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.shape)):
            raise DomainError(f"点 {tuple(point)} 不在网格内")
        return tuple(int(i) for i in idx)

    def sample(self, fn: Callable[[np.ndarray], np.ndarray]) -> "SampledFunction":
        """在所有节点上对 fn(points) 取值"""
        values = np.broadcast_to(np.asarray(fn(self.points), dtype=float), self.shape)
        return SampledFunction(self, np.array(values))

    def zeros(self) -> "SampledFunction":
        return SampledFunction(self, np.zeros(self.shape))

    def header(self) -> str:
        def fmt(values):
            return ",".join(repr(float(v)) for v in values)

        return (
            f"{_DUMP_MAGIC}\n"
            f"lower={fmt(self.lower)}\n"
            f"upper={fmt(self.upper)}\n"
            f"shape={','.join(str(c) for c in self.shape)}\n"
            f"spacing={fmt(self.spacing)}"
        )


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """网格上的标量场, 所有积分与极大函数计算的载体"""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            if values.size != self.grid.size:
                raise DimensionMismatchError(self.grid.size, values.size)
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise DomainError("采样值中含有 NaN 或 Inf")
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray) -> "SampledFunction":
        return SampledFunction(self.grid, values)

    def _other(self, other) -> Union[np.ndarray, float]:
        if isinstance(other, SampledFunction):
            if other.grid != self.grid:
                raise DimensionMismatchError(self.grid.shape, other.grid.shape)
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._other(other))

    def __rsub__(self, other):
        return self.with_values(self._other(other) - self.values)

    def __mul__(self, other):
        return self.with_values(self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def __abs__(self):
        return self.with_values(np.abs(self.values))

    def _select(self, mask: Optional[np.ndarray]) -> np.ndarray:
        if mask is None:
            return self.values.ravel()
        mask = np.asarray(mask)
        if mask.dtype == bool:
            return self.values[mask.reshape(self.grid.shape)]
        return self.values.ravel()[mask]

    def integrate(self, mask: Optional[np.ndarray] = None) -> float:
        """节点求积 Σ f · Π h"""
        return float(np.sum(self._select(mask))) * self.grid.cell_volume

    def lp_norm(self, p: float, mask: Optional[np.ndarray] = None) -> float:
        """
        L^p 范数 (p = inf 时为最大模)

        Raises:
            DomainError: p < 1
        """
        if p < 1:
            raise DomainError(f"p 必须 ≥ 1, 实际 {p}")
        data = np.abs(self._select(mask))
        if data.size == 0:
            return 0.0
        if np.isinf(p):
            return float(np.max(data))
        return float((np.sum(data ** p) * self.grid.cell_volume) ** (1.0 / p))

    def average(self, mask: Optional[np.ndarray] = None) -> float:
        data = self._select(mask)
        if data.size == 0:
            raise EmptyBallError(0.0)
        return float(np.mean(data))

    def at(self, point) -> float:
        """最近节点上的值"""
        return float(self.values[self.grid.nearest_index(point)])

    def interpolate(self, pts: np.ndarray, order: int = 3) -> np.ndarray:
        """样条插值到任意点, 形状 (..., n) → (...)"""
        pts = np.asarray(pts, dtype=float)
        if not np.all(self.grid.contains_points(pts)):
            raise DomainError("插值点超出网格盒子")
        frac = (pts - self.grid.lower_array) / self.grid.spacing
        coords = np.moveaxis(frac, -1, 0).reshape(self.grid.group.n, -1)
        out = map_coordinates(self.values, coords, order=order, mode="nearest")
        return out.reshape(pts.shape[:-1])

    def dump(self, path: Path) -> None:
        """
        写出网格转储: 文本头 (盒子, 节点数, 步长) + 行优先 float64

        Raises:
            ArtifactWriteError: 写入失败
        """
        try:
            payload = self.grid.header().encode("utf-8") + _DATA_MARKER
            payload += np.ascontiguousarray(self.values, dtype="<f8").tobytes()
            Path(path).write_bytes(payload)
        except OSError as e:
            raise ArtifactWriteError(f"无法写入网格文件 '{path}': {e}")

    @classmethod
    def load(cls, path: Path, group: CarnotGroup = HEISENBERG) -> "SampledFunction":
        """读取 dump 写出的网格文件"""
        raw = Path(path).read_bytes()
        head, sep, body = raw.partition(_DATA_MARKER)
        if not sep or not head.startswith(_DUMP_MAGIC.encode("utf-8")):
            raise DomainError(f"'{path}' 不是网格转储文件")
        fields = {}
        for line in head.decode("utf-8").splitlines()[1:]:
            key, value = line.split("=", 1)
            fields[key] = value.split(",")
        grid = Grid(
            tuple(float(v) for v in fields["lower"]),
            tuple(float(v) for v in fields["upper"]),
            tuple(int(v) for v in fields["shape"]),
            group,
        )
        values = np.frombuffer(body, dtype="<f8")
        return cls(grid, values.reshape(grid.shape).copy())

    def slice_table(self, axis: int = 2, index: Optional[int] = None) -> Tuple[list, np.ndarray]:
        """取垂直于 axis 的一个切片, 返回 (列名, 行)"""
        if index is None:
            index = self.grid.shape[axis] // 2
        plane = np.take(self.values, index, axis=axis)
        others = [k for k in range(self.grid.group.n) if k != axis]
        mesh = np.meshgrid(*(self.grid.axes[k] for k in others), indexing="ij")
        names = ["x", "y", "t"][: self.grid.group.n]
        columns = [names[k] for k in others] + ["value"]
        rows = np.column_stack([m.ravel() for m in mesh] + [plane.ravel()])
        return columns, rows
