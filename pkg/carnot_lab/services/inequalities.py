from typing import Dict, List, Optional, Sequence
import logging

import numpy as np

from carnot_lab.config import current_settings
from carnot_lab.core.calculus import d_k_magnitude
from carnot_lab.core.corpus import TestFunction
from carnot_lab.core.group import Ball, GroupPoint
from carnot_lab.core.grid import Grid
from carnot_lab.exceptions.custom_exceptions import DomainError
from carnot_lab.schemas.report import PoincareEstimate, VerificationReport
from carnot_lab.services.common import measurement, new_report, support_radius

logger = logging.getLogger(__name__)


def _mean_power(values: np.ndarray, p: float) -> float:
    """(avg |values|^p)^{1/p}"""
    return float(np.mean(np.abs(values) ** p) ** (1.0 / p))


def poincare_ratio(u: TestFunction, p: float, Lambda: float, radius: float, grid: Grid, center: GroupPoint) -> float:
    """
    (avg_B |u − u_B|^p)^{1/p} / (r·(avg_{ΛB} |Du|^p)^{1/p}), Du = Σ|X_iu|

    分子为零时返回 0; 只有分母为零时返回 inf。
    """
    inner = grid.ball_mask(Ball(center, radius))
    outer = grid.ball_mask(Ball(center, Lambda * radius))
    values = u.sample(grid).values[inner]
    lhs = _mean_power(values - np.mean(values), p)
    rhs = radius * _mean_power(d_k_magnitude(u, 1, grid).values[outer], p)
    if lhs <= 1e-14 * max(1.0, float(np.max(np.abs(values)))):
        return 0.0
    return lhs / rhs if rhs > 0 else float("inf")


def estimate_poincare(
    corpus: Sequence[TestFunction],
    p: float,
    lambdas: Optional[Sequence[float]] = None,
    c_max: Optional[float] = None,
    radius: float = 1.0,
    cells: Optional[int] = None,
    center: Optional[GroupPoint] = None,
) -> PoincareEstimate:
    """
    在 Λ 搜索网格中找使 Poincaré 不等式对整个语料成立的最小 Λ

    Args:
        corpus: 校准语料
        p: 指数
        lambdas: Λ 候选 (默认取配置)
        c_max: 可接受的常数上界
        radius: 球 B 的半径

    Returns:
        PoincareEstimate: 最小可用 Λ 及对应的 c

    Raises:
        DomainError: 语料为空, 或没有 Λ 使 c ≤ c_max
    """
    if not corpus:
        raise DomainError("Poincaré 校准语料为空")
    if p < 1:
        raise DomainError(f"p 必须 ≥ 1, 实际 {p}")
    lambdas = sorted(lambdas or current_settings().poincare_lambdas)
    c_max = c_max or current_settings().poincare_c_max
    center = center or GroupPoint.origin()

    per_lambda: Dict[str, float] = {}
    for Lambda in lambdas:
        if Lambda <= 1:
            raise DomainError(f"Λ 必须 > 1, 实际 {Lambda}")
        grid = Grid.around_ball(Ball(center, Lambda * radius), cells)
        c = max(poincare_ratio(u, p, Lambda, radius, grid, center) for u in corpus)
        logger.debug(f"Poincaré: Λ = {Lambda:g}, c = {c:.4g}")
        if np.isfinite(c):
            per_lambda[f"{Lambda:g}"] = c
        if c <= c_max:
            return PoincareEstimate(Lambda=Lambda, c=c, p=p, per_lambda=per_lambda)

    raise DomainError(f"Λ ∈ {lambdas} 中没有使 c ≤ {c_max:g} 的取值 (语料或分辨率不足)")


def _interpolation_sides(u: TestFunction, grid: Grid, p: float, i: int) -> Dict[str, float]:
    return {
        "first": u.sample(grid, (i,)).lp_norm(p),
        "second": u.sample(grid, (i, i)).lp_norm(p),
        "zeroth": u.sample(grid).lp_norm(p),
    }


def _ratio(norms: Dict[str, float], epsilon: float) -> float:
    rhs = epsilon * norms["second"] + (2.0 / epsilon) * norms["zeroth"]
    if rhs == 0.0:
        return 0.0
    return norms["first"] / rhs


def verify_interpolation(
    corpus: Sequence[TestFunction],
    p_values: Sequence[float],
    epsilons: Sequence[float] = (0.1, 1.0, 10.0),
    cells: Optional[int] = None,
    lam: float = 2.0,
) -> VerificationReport:
    """
    ‖X_iu‖_p ≤ ε‖X_i²u‖_p + (2/ε)‖u‖_p 对每个 (u, ε, p, i) 成立

    另外检查伸缩一致性: u ↦ u∘D_λ 且 ε ↦ ε/λ 时比值不变。

    Raises:
        DomainError: 语料中有非紧支撑的函数
    """
    report = new_report("interpolation", p_values=list(p_values), epsilons=list(epsilons), lam=lam, cells=cells)
    worst, worst_drift = 0.0, 0.0
    all_hold = True
    for u in corpus:
        if u.support is None:
            raise DomainError(f"{u.name} 没有紧支撑")
        group = u.group
        grid = Grid.around_ball(Ball(GroupPoint.origin(group), support_radius(u)), cells)
        dilated = u.dilated(lam)
        dilated_grid = Grid.around_ball(Ball(GroupPoint.origin(group), support_radius(dilated)), cells)
        for p in p_values:
            for i in range(group.q):
                norms = _interpolation_sides(u, grid, p, i)
                scaled = _interpolation_sides(dilated, dilated_grid, p, i)
                for epsilon in epsilons:
                    ratio = _ratio(norms, epsilon)
                    scaled_ratio = _ratio(scaled, epsilon / lam)
                    drift = abs(scaled_ratio - ratio) / max(ratio, 1e-300) if ratio > 0 else scaled_ratio
                    holds = ratio <= 1.0
                    all_hold &= holds
                    worst = max(worst, ratio)
                    worst_drift = max(worst_drift, drift)
                    report.measurements.append(
                        measurement(
                            f"{u.name}|p={p:g}|X{i + 1}|eps={epsilon:g}",
                            holds,
                            ratio=ratio,
                            lhs=norms["first"],
                            rhs=epsilon * norms["second"] + (2.0 / epsilon) * norms["zeroth"],
                            dilation_drift=drift,
                        )
                    )

    report.constant = worst
    if not all_hold:
        report.notes.append("插值不等式在部分 (u, ε, p) 上不成立")
    if worst_drift > 1e-6:
        report.notes.append(f"伸缩一致性偏差 {worst_drift:.2e} 超过 1e-6")
    report.status = "pass" if all_hold and worst_drift <= 1e-6 else "fail"
    return report


def poincare_report(
    corpus: Sequence[TestFunction],
    p_values: Sequence[float],
    cells: Optional[int] = None,
    radius: float = 1.0,
) -> VerificationReport:
    """每个 p 的 Poincaré 估计及其在网格加密下的稳定性 (漂移 ≤ 20%)"""
    cells = cells or current_settings().cells_per_ball
    report = new_report("poincare", p_values=list(p_values), cells=cells, radius=radius)
    statuses: List[bool] = []
    worst_c = 0.0
    for p in p_values:
        try:
            coarse = estimate_poincare(corpus, p, radius=radius, cells=cells)
            fine = estimate_poincare(corpus, p, lambdas=[coarse.Lambda], radius=radius, cells=2 * cells)
        except DomainError as e:
            report.notes.append(f"p = {p:g}: {e.detail}")
            statuses.append(False)
            continue
        drift = abs(fine.c - coarse.c) / coarse.c if coarse.c > 0 else 0.0
        stable = drift <= 0.2
        statuses.append(stable)
        worst_c = max(worst_c, coarse.c, fine.c)
        report.measurements.append(
            measurement(f"p={p:g}", stable, Lambda=coarse.Lambda, c=coarse.c, c_refined=fine.c, drift=drift)
        )
        if not stable:
            report.notes.append(f"p = {p:g}: 加密后 c 漂移 {drift:.1%}")
    report.constant = worst_c
    report.status = "pass" if statuses and all(statuses) else "fail"
    return report
