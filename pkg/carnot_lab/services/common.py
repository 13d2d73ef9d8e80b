from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple
import logging

import numpy as np
from scipy import stats

from carnot_lab.config import current_settings
from carnot_lab.core.calculus import multi_indices
from carnot_lab.core.corpus import TestFunction
from carnot_lab.core.group import Ball, GroupPoint
from carnot_lab.core.grid import Grid, SampledFunction
from carnot_lab.schemas.report import CheckStatus, Measurement, VerificationReport

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LogLogFit:
    """log(value) = slope·log(k) + intercept 的最小二乘拟合"""

    slope: float
    intercept: float
    r2: float
    points: int


def fit_loglog(ks: Sequence[float], values: Sequence[float]) -> Optional[LogLogFit]:
    """
    对数坐标下的线性拟合

    数据本身为常数时拟合是精确的, 此时 R² 记为 1。

    Returns:
        LogLogFit: 少于 2 个正的有限值时返回 None
    """
    ks = np.asarray(ks, dtype=float)
    values = np.asarray(values, dtype=float)
    usable = np.isfinite(values) & (values > 0) & (ks > 0)
    if np.count_nonzero(usable) < 2:
        return None
    x, y = np.log(ks[usable]), np.log(values[usable])
    if np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        return LogLogFit(0.0, float(np.mean(y)), 1.0, int(x.size))
    fit = stats.linregress(x, y)
    return LogLogFit(float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2), int(x.size))


def combine_status(statuses: Iterable[CheckStatus]) -> CheckStatus:
    """fail 优先于 inconclusive, 其余为 pass"""
    statuses = list(statuses)
    if "fail" in statuses:
        return "fail"
    if "inconclusive" in statuses:
        return "inconclusive"
    return "pass"


def slope_status(
    fit: Optional[LogLogFit],
    lower: float = -np.inf,
    upper: float = np.inf,
    min_points: int = 3,
) -> CheckStatus:
    """斜率落在 [lower, upper] 内为 pass; 点数不足或 R² 过低为 inconclusive"""
    if fit is None or fit.points < min_points or fit.r2 < current_settings().slope_r2_min:
        return "inconclusive"
    return "pass" if lower <= fit.slope <= upper else "fail"


def new_report(check: str, **params) -> VerificationReport:
    clean = {}
    for key, value in params.items():
        if isinstance(value, np.generic):
            value = value.item()
        elif isinstance(value, tuple):
            value = list(value)
        clean[key] = value
    return VerificationReport(check=check, params=clean)


def measurement(label: str, passed: Optional[bool] = None, **values: float) -> Measurement:
    return Measurement(label=label, values={k: float(v) for k, v in values.items()}, passed=passed)


def finite_or_none(value: float) -> Optional[float]:
    value = float(value)
    return value if np.isfinite(value) else None


def second_derivative_fields(u: TestFunction, grid: Grid) -> Dict[tuple, SampledFunction]:
    """解析的 X_iX_ju, 以 (i, j) 为键"""
    return {index: u.sample(grid, index) for index in multi_indices(2, grid.group.q)}


def support_radius(u: TestFunction) -> float:
    """以原点为中心包含 u 的支撑的最小规范半径 (无紧支撑时为 inf)"""
    if u.support is None:
        return float("inf")
    return u.support.center.norm() + u.support.radius


def region_grid(ball: Ball, u: TestFunction, cells: Optional[int] = None) -> Tuple[Grid, np.ndarray, bool]:
    """
    在 ball 与 u 的支撑中较小者周围建网格

    Returns:
        (grid, mask, full): mask 为 ball 内的节点; full 表示网格覆盖了整个 ball
    """
    group = ball.group
    radius = support_radius(u) * (1 + 1e-9)
    full = radius >= ball.radius
    grid = Grid.around_ball(ball if full else Ball(ball.center, radius), cells)
    mask = group.quasi_distance(grid.points, ball.center.as_array()) < ball.radius
    return grid, mask, full


def ball_mean(f: SampledFunction, mask: np.ndarray, ball: Ball, full: bool) -> float:
    """
    avg_ball f

    网格覆盖整个球时用离散测度, 否则 (f 在网格外为零) 除以球的体积。
    """
    if full:
        return f.average(mask)
    return f.integrate(mask) / ball.volume


def origin_ball(radius: float) -> Ball:
    return Ball(GroupPoint.origin(), radius)
