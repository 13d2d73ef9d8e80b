from itertools import product
from typing import Dict, Iterator, Optional, Sequence, Tuple, Union
import logging

import numpy as np

from carnot_lab.core.corpus import TestFunction, check_multi_index, cutoff
from carnot_lab.core.group import Ball, GroupPoint
from carnot_lab.core.grid import Grid, SampledFunction
from carnot_lab.exceptions.custom_exceptions import BallOutsideGridError, DomainError

logger = logging.getLogger(__name__)

Function = Union[SampledFunction, TestFunction]
Region = Union[Ball, Tuple[Sequence[float], Sequence[float]], None]


def partial_derivative(f: SampledFunction, axis: int) -> SampledFunction:
    """欧氏偏导数: 内部中心差分, 边界二阶单侧差分"""
    grid = f.grid
    if grid.shape[axis] < 3:
        raise DomainError(f"坐标轴 {axis} 上节点不足, 无法构造二阶差分")
    return f.with_values(np.gradient(f.values, grid.spacing[axis], axis=axis, edge_order=2))


def apply_field(i: int, u: Function) -> Function:
    """
    X_i u (下标从 0 开始)

    TestFunction 返回解析导数; SampledFunction 用差分计算欧氏偏导数,
    再与节点处的场系数组合。
    """
    if isinstance(u, TestFunction):
        return u.derived((i,))
    group = u.grid.group
    check_multi_index((i,), group)
    coef = group.field_matrix(u.grid.points)[..., i, :]
    out = np.zeros(u.grid.shape)
    for axis in range(group.n):
        c = coef[..., axis]
        if np.any(c != 0):
            out += c * partial_derivative(u, axis).values
    return u.with_values(out)


def horizontal_derivative(u: Function, index: Sequence[int], grid: Optional[Grid] = None) -> SampledFunction:
    """
    X_I u 在网格上的取值

    Args:
        u: 解析函数 (需提供 grid) 或采样函数
        index: 多重下标 (i1, ..., ik)
        grid: 解析函数的采样网格
    """
    if isinstance(u, TestFunction):
        if grid is None:
            raise DomainError("解析函数求值需要网格")
        return u.sample(grid, index)
    index = check_multi_index(index, u.grid.group)
    out = u
    for i in reversed(index):
        out = apply_field(i, out)
    return out


def multi_indices(order: int, q: int) -> Iterator[Tuple[int, ...]]:
    return product(range(q), repeat=order)


def d_k_magnitude(u: Function, k: int, grid: Optional[Grid] = None) -> SampledFunction:
    """D^k u = Σ_{|I|=k} |X_I u|"""
    grid = grid or u.grid
    total = np.zeros(grid.shape)
    for index in multi_indices(k, grid.group.q):
        total += np.abs(horizontal_derivative(u, index, grid).values)
    return SampledFunction(grid, total)


def commutator_check(i: int, j: int, u: TestFunction, grid: Grid) -> float:
    """max |(X_iX_j − X_jX_i)u − [X_i, X_j]u| (解析导数)"""
    pts = grid.points
    lhs = u.evaluate(pts, (i, j)) - u.evaluate(pts, (j, i))
    bracket = u.group.bracket(i, j)
    rhs = np.zeros(grid.shape)
    for axis, coefficient in enumerate(bracket):
        if coefficient != 0:
            rhs += coefficient * u.partial(pts, axis)
    return float(np.max(np.abs(lhs - rhs)))


def region_mask(grid: Grid, region: Region) -> Optional[np.ndarray]:
    """区域 (球, 盒子或整个网格) 的节点掩码"""
    if region is None:
        return None
    if isinstance(region, Ball):
        return grid.ball_mask(region)
    lo, hi = (np.asarray(v, dtype=float) for v in region)
    if not grid.contains_box(lo, hi):
        raise DomainError("区域盒子超出网格")
    pts = grid.points
    return np.all((pts >= lo) & (pts <= hi), axis=-1)


def sobolev_norm(u: SampledFunction, k: int, p: float, region: Region = None) -> float:
    """
    ‖u‖_{W_X^{k,p}(region)} = Σ_{h ≤ k} ‖D^h u‖_{L^p(region)}

    Raises:
        DomainError: p < 1 或 k 不在 0..3
    """
    if p < 1:
        raise DomainError(f"p 必须 ≥ 1, 实际 {p}")
    if k not in (0, 1, 2, 3):
        raise DomainError(f"阶数必须在 0..3 内, 实际 {k}")
    mask = region_mask(u.grid, region)
    return sum(d_k_magnitude(u, h).lp_norm(p, mask) for h in range(k + 1))


def make_cutoff(sigma: float, r: float, center: Optional[GroupPoint] = None) -> TestFunction:
    """φ_σ: B_{σr} 上为 1, 支撑在 B_{σ'r}, σ' = (1+σ)/2"""
    return cutoff(sigma, r, center)


def cutoff_constants(phi: TestFunction, grid: Grid) -> Dict[str, float]:
    """
    测量截断函数的导数界中的常数

    Returns:
        Dict: c1 = max|X_jφ|·(1−σ)r, c2 = max|X_iX_jφ|·(1−σ)²r²
    """
    sigma, r = phi.params["sigma"], phi.params["radius"]
    scale = (1.0 - sigma) * r
    pts = grid.points
    q = phi.group.q
    c1 = max(float(np.max(np.abs(phi.evaluate(pts, (j,))))) for j in range(q))
    c2 = max(float(np.max(np.abs(phi.evaluate(pts, idx)))) for idx in multi_indices(2, q))
    return {"c1": c1 * scale, "c2": c2 * scale ** 2}


def affine_part(grid: Grid, coefficients: Dict[str, float]) -> SampledFunction:
    """c₀ + Σ c_i x_i"""
    pts = grid.points
    values = np.full(grid.shape, coefficients["c0"])
    for i in range(grid.group.q):
        values = values + coefficients[f"c{i + 1}"] * pts[..., i]
    return SampledFunction(grid, values)


def normalize_affine(
    u: SampledFunction,
    Lambda: float,
    radius: float = 1.0,
    center: Optional[GroupPoint] = None,
) -> Tuple[SampledFunction, Dict[str, float]]:
    """
    ũ = u + c₀ + Σ c_i x_i, 使 ∫_{B₄} ũ = 0 且 ∫_{B_{4Λ}} X_i ũ = 0

    X_i x_j = δ_ij, 因此 c_i = −avg_{B_{4Λ}} X_i u; 二阶水平导数不变。

    Raises:
        DomainError: 所需的球不在网格内
    """
    if Lambda < 1:
        raise DomainError(f"Λ 必须 ≥ 1, 实际 {Lambda}")
    grid = u.grid
    center = center or GroupPoint.origin(grid.group)
    inner = Ball(center, 4.0 * radius)
    outer = Ball(center, 4.0 * Lambda * radius)
    try:
        outer_mask = grid.ball_mask(outer)
        inner_mask = grid.ball_mask(inner)
    except BallOutsideGridError as e:
        raise DomainError(f"仿射归一化需要 B_4 与 B_4Λ 在网格内 ({e.detail})")

    coefficients = {"c0": 0.0}
    for i in range(grid.group.q):
        coefficients[f"c{i + 1}"] = -apply_field(i, u).average(outer_mask)
    shifted = u + affine_part(grid, coefficients)
    coefficients["c0"] = -shifted.average(inner_mask)
    normalized = shifted + coefficients["c0"]
    logger.debug(f"仿射归一化系数: {coefficients}")
    return normalized, coefficients
