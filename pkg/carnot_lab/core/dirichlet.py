from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union
import logging

import numpy as np
from scipy import sparse

from carnot_lab.config import current_settings
from carnot_lab.core.corpus import TestFunction
from carnot_lab.core.group import Ball
from carnot_lab.core.grid import Grid, SampledFunction
from carnot_lab.core.model import EllipticMatrix, as_elliptic
from carnot_lab.exceptions.custom_exceptions import (
    BallOutsideGridError,
    ConvergenceError,
    DomainError,
    NotPositiveDefiniteError,
)
from carnot_lab.schemas.report import MaxPrincipleReport, SolveDiagnostics

logger = logging.getLogger(__name__)

MIN_CELLS_ACROSS = 24

Data = Union[SampledFunction, TestFunction, float, None]


def _resolve(data: Data, grid: Grid) -> np.ndarray:
    if data is None:
        return np.zeros(grid.size)
    if isinstance(data, SampledFunction):
        if data.grid != grid:
            raise DomainError("数据与问题不在同一网格上")
        return data.values.ravel().copy()
    if isinstance(data, TestFunction):
        return data.evaluate(grid.points).ravel()
    return np.full(grid.size, float(data))


@dataclass(frozen=True, eq=False)
class DiscreteDirichletProblem:
    """
    离散 Dirichlet 问题 L̄h = g 于 B, h = u 于 B 外

    内部节点为 d(center, ·) < r 的网格节点, 其余节点取边界数据。
    """

    ball: Ball
    abar: EllipticMatrix
    boundary: Data
    rhs: Data = None
    grid: Optional[Grid] = None
    tolerance: float = field(default_factory=lambda: current_settings().solver_tolerance)
    max_iterations: int = field(default_factory=lambda: current_settings().solver_max_iterations)

    def __post_init__(self):
        object.__setattr__(self, "abar", as_elliptic(self.abar))
        grid = self.grid or Grid.around_ball(self.ball, max(current_settings().cells_per_ball, MIN_CELLS_ACROSS))
        object.__setattr__(self, "grid", grid)
        lo, hi = self.ball.bounding_box()
        if not grid.contains_box(lo - grid.spacing, hi + grid.spacing):
            raise BallOutsideGridError(self.ball.center.coords, self.ball.radius)
        cells = np.min((hi - lo) / grid.spacing)
        if cells < MIN_CELLS_ACROSS * (1 - 1e-9):
            raise DomainError(f"网格过粗: 球的直径上只有 {cells:.1f} 个单元 (至少 {MIN_CELLS_ACROSS})")

    @property
    def interior(self) -> np.ndarray:
        return self.grid.ball_indices(self.ball)


def _difference_matrices(grid: Grid, direction: int) -> Tuple[List[sparse.csr_matrix], np.ndarray]:
    """
    单侧水平差分 D_i^± = Σ_k c_ik(p) ∂_k^± (direction = ±1)

    只保留所有模板点都在网格内的行。
    """
    group = grid.group
    shape = grid.shape
    index = np.arange(grid.size).reshape(shape)
    valid = np.ones(shape, dtype=bool)
    for axis in range(group.n):
        edge = [slice(None)] * group.n
        edge[axis] = -1 if direction > 0 else 0
        valid[tuple(edge)] = False
    rows = index[valid]
    neighbours = [np.roll(index, -direction, axis=axis)[valid] for axis in range(group.n)]

    coef = group.field_matrix(grid.points)[valid]
    count = rows.size
    local = np.arange(count)
    matrices = []
    for i in range(group.q):
        data, cols, row_ids = [], [], []
        for axis in range(group.n):
            c = coef[:, i, axis] * direction / grid.spacing[axis]
            if not np.any(c):
                continue
            data += [c, -c]
            cols += [neighbours[axis], rows]
            row_ids += [local, local]
        matrices.append(
            sparse.csr_matrix(
                (np.concatenate(data), (np.concatenate(row_ids), np.concatenate(cols))),
                shape=(count, grid.size),
            )
        )
    return matrices, rows


def stiffness_matrix(grid: Grid, abar: EllipticMatrix) -> sparse.csr_matrix:
    """K = (dV/2) Σ_± Σ_ij ā_ij (D_i^±)ᵀ D_j^±, 前向与后向能量的平均"""
    q = grid.group.q
    K = sparse.csr_matrix((grid.size, grid.size))
    for direction in (1, -1):
        D, _ = _difference_matrices(grid, direction)
        for i in range(q):
            for j in range(q):
                if abar.a[i, j] != 0:
                    K = K + abar.a[i, j] * (D[i].T @ D[j])
    return (0.5 * grid.cell_volume * K).tocsr()


def energy(u: np.ndarray, K: sparse.csr_matrix, g: np.ndarray, cell_volume: float) -> float:
    """½uᵀKu + ∫gu"""
    return float(0.5 * u @ (K @ u) + cell_volume * (g @ u))


def conjugate_gradient(
    A: sparse.csr_matrix,
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    tol: float = 1e-8,
    maxiter: int = 10_000,
) -> Tuple[np.ndarray, dict]:
    """
    对称正定系统的共轭梯度法

    以 ‖r‖/‖b‖ ≤ tol 停止; 二次泛函 ½xᵀAx − bᵀx 单调下降。

    Raises:
        NotPositiveDefiniteError: 某个搜索方向上 pᵀAp ≤ 0
    """
    x = np.zeros_like(b) if x0 is None else x0.copy()
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros_like(b), {"iterations": 0, "residual": 0.0, "converged": True}

    r = b - A @ x
    p = r.copy()
    rr = float(r @ r)
    residual = np.sqrt(rr) / b_norm
    iterations = 0
    while residual > tol and iterations < maxiter:
        Ap = A @ p
        curvature = float(p @ Ap)
        if curvature <= 0:
            raise NotPositiveDefiniteError(iterations, curvature)
        alpha = rr / curvature
        x += alpha * p
        r -= alpha * Ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        iterations += 1
        residual = np.sqrt(rr) / b_norm
    return x, {"iterations": iterations, "residual": residual, "converged": residual <= tol}


def solve_dirichlet(prob: DiscreteDirichletProblem) -> Tuple[SampledFunction, SolveDiagnostics]:
    """
    离散能量 ½∫Σā_ij X_ju X_iu + ∫gu 的极小元

    Raises:
        ConvergenceError: 达到迭代上限仍未收敛 (附带诊断信息)
        NotPositiveDefiniteError: 内部刚度矩阵不是正定的
    """
    grid = prob.grid
    u = _resolve(prob.boundary, grid)
    g = _resolve(prob.rhs, grid)
    interior = prob.interior
    outside = np.setdiff1d(np.arange(grid.size), interior, assume_unique=True)

    K = stiffness_matrix(grid, prob.abar)
    K_ii = K[interior][:, interior]
    K_ib = K[interior][:, outside]
    b = -(K_ib @ u[outside]) - grid.cell_volume * g[interior]

    x, info = conjugate_gradient(K_ii, b, u[interior], prob.tolerance, prob.max_iterations)
    u[interior] = x
    diagnostics = SolveDiagnostics(
        iterations=info["iterations"],
        residual=float(info["residual"]),
        energy=energy(u, K, g, grid.cell_volume),
        unknowns=int(interior.size),
        converged=bool(info["converged"]),
    )
    if not diagnostics.converged:
        raise ConvergenceError(diagnostics.iterations, diagnostics.residual, diagnostics)
    logger.debug(
        f"Dirichlet 求解: {interior.size} 个未知量, {diagnostics.iterations} 次迭代, "
        f"残差 {diagnostics.residual:.2e}"
    )
    return SampledFunction(grid, u.reshape(grid.shape)), diagnostics


def discrete_energy(h: SampledFunction, abar, rhs: Data = None) -> float:
    """网格函数的离散能量"""
    abar = as_elliptic(abar)
    K = stiffness_matrix(h.grid, abar)
    return energy(h.values.ravel(), K, _resolve(rhs, h.grid), h.grid.cell_volume)


def harmonic_replacement(
    u: Union[TestFunction, SampledFunction],
    ball: Ball,
    abar,
    grid: Optional[Grid] = None,
    tolerance: Optional[float] = None,
) -> SampledFunction:
    """L̄h = 0 于 ball, h = u 于边界"""
    prob = DiscreteDirichletProblem(
        ball=ball,
        abar=abar,
        boundary=u,
        grid=grid if grid is not None else (u.grid if isinstance(u, SampledFunction) else None),
        tolerance=tolerance or current_settings().solver_tolerance,
    )
    h, _ = solve_dirichlet(prob)
    return h


def harmonic_zoom(
    u: Union[TestFunction, SampledFunction],
    ball: Ball,
    target_radius: float,
    abar,
    cells: Optional[int] = None,
    factor: Optional[float] = None,
    tolerance: Optional[float] = None,
) -> Tuple[SampledFunction, List[SolveDiagnostics]]:
    """
    在 ball 上求调和延拓, 并逐级缩小到半径 ≤ 2·target_radius 的同心球

    调和函数限制到同心子球上即是以自身迹为边界数据的 Dirichlet 解;
    每一级的边界数据由上一级解的三次样条插值给出。
    采样函数 u 在自身网格上求第一级。
    """
    cells = max(cells or current_settings().cells_per_ball, MIN_CELLS_ACROSS)
    factor = factor or current_settings().zoom_factor
    tolerance = tolerance or current_settings().solver_tolerance
    if factor <= 1:
        raise DomainError(f"缩放倍数必须 > 1, 实际 {factor}")
    if target_radius <= 0 or target_radius > ball.radius:
        raise DomainError(f"目标半径 {target_radius:g} 必须在 (0, {ball.radius:g}] 内")

    current = ball
    first = u.grid if isinstance(u, SampledFunction) else Grid.around_ball(current, cells)
    prob = DiscreteDirichletProblem(current, abar, u, grid=first, tolerance=tolerance)
    h, diag = solve_dirichlet(prob)
    history = [diag]
    while current.radius > 2.0 * target_radius * (1 + 1e-9):
        current = Ball(ball.center, max(current.radius / factor, 2.0 * target_radius))
        grid = Grid.around_ball(current, cells)
        trace = SampledFunction(grid, h.interpolate(grid.points))
        prob = DiscreteDirichletProblem(current, abar, trace, grid=grid, tolerance=tolerance)
        h, diag = solve_dirichlet(prob)
        history.append(diag)
    logger.debug(f"调和缩放: {len(history)} 级, 最终半径 {current.radius:g}")
    return h, history


def boundary_layer(grid: Grid, interior: np.ndarray, abar=None) -> np.ndarray:
    """
    与内部节点经刚度矩阵耦合的非内部节点

    即 K[interior][:, 外部] 的非零列。单侧差分模板含 ∂_t, 因此层中也有
    对角方向的节点。
    """
    abar = EllipticMatrix.identity() if abar is None else as_elliptic(abar)
    outside = np.setdiff1d(np.arange(grid.size), interior, assume_unique=True)
    coupling = stiffness_matrix(grid, abar)[interior][:, outside].tocsc()
    coupling.eliminate_zeros()
    layer = np.zeros(grid.size, dtype=bool)
    layer[outside[np.diff(coupling.indptr) > 0]] = True
    return layer.reshape(grid.shape)


def max_principle_check(h: SampledFunction, ball: Ball, abar=None, tolerance: float = 1e-6) -> MaxPrincipleReport:
    """min_∂ h ≤ h ≤ max_∂ h 于内部节点, 返回最坏违背量 (∂ 取 ā 的刚度矩阵边界层)"""
    interior = h.grid.ball_indices(ball)
    layer = boundary_layer(h.grid, interior, abar)
    flat = h.values.ravel()
    b_min, b_max = float(np.min(h.values[layer])), float(np.max(h.values[layer]))
    i_min, i_max = float(np.min(flat[interior])), float(np.max(flat[interior]))
    violation = max(0.0, b_min - i_min, i_max - b_max)
    return MaxPrincipleReport(
        boundary_min=b_min,
        boundary_max=b_max,
        interior_min=i_min,
        interior_max=i_max,
        violation=violation,
        passed=violation <= tolerance,
    )
