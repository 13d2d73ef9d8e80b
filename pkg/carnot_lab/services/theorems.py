from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np

from carnot_lab.config import current_settings
from carnot_lab.core.corpus import TestFunction, default_corpus
from carnot_lab.core.group import Ball
from carnot_lab.core.grid import Grid, SampledFunction
from carnot_lab.core.maximal import BallLattice, DomainChain, MaximalConfig, a_sharp, hl_maximal_field, sharp_maximal_field
from carnot_lab.core.model import CoefficientField, EllipticMatrix, model_apply, variable_apply
from carnot_lab.exceptions.custom_exceptions import DomainError
from carnot_lab.schemas.report import VerificationReport
from carnot_lab.services.common import finite_or_none, measurement, new_report, origin_ball, second_derivative_fields
from carnot_lab.services.lemmas import ball_estimate_terms

logger = logging.getLogger(__name__)

# ε = R / CHAIN_FILL, 于是 R < ε_{m+2}
CHAIN_FILL = 0.8
ABSORPTION_FILL = 0.9
MONOTONE_SLACK = 1e-6


@dataclass(frozen=True)
class MaximalSetup:
    """B_R 上逐点估计所用的区域链、网格与球格"""

    R: float
    chain: DomainChain
    grid: Grid
    cfg: MaximalConfig

    @property
    def epsilon(self) -> float:
        return self.chain.epsilon(0)


def maximal_setup(R: float, cells: Optional[int] = None, stride: Optional[int] = None) -> MaximalSetup:
    """
    区域链取 ε_m = R/0.8, 网格覆盖 B(0, R + 2ε), 球格半径不超过 ε

    Raises:
        DomainError: R ≤ 0
    """
    if not R > 0:
        raise DomainError(f"R 必须为正, 实际 {R}")
    chain = DomainChain(base_radius=R / (CHAIN_FILL * current_settings().chain_margin))
    eps = chain.epsilon(0)
    grid = Grid.around_ball(origin_ball(R + 2.0 * eps), cells)
    lattice = BallLattice.for_grid(grid, eps, stride=stride)
    return MaximalSetup(R=R, chain=chain, grid=grid, cfg=MaximalConfig(lattice))


def model_matrix(a: CoefficientField, R: float, k: float, r: float, cells: Optional[int] = None) -> EllipticMatrix:
    """ā = (a)_{B_R} 若 kr ≥ R, 否则 ā = (a)_{B_kr}"""
    ball = origin_ball(R if k * r >= R else k * r)
    return a.average(Grid.around_ball(ball, cells), ball)


def j2_bound(
    a: CoefficientField,
    R: float,
    k: float,
    r: float,
    setup: MaximalSetup,
    m: int = 0,
    cells: Optional[int] = None,
) -> Dict[str, float]:
    """
    J₂ = Σ_ij ∫_{B_kr ∩ B_R}|a_ij − ā_ij| 与 (kr)^Q·a♯_R 的比值

    两者同为零时比值记为 0。
    """
    group = setup.grid.group
    small = origin_ball(min(k * r, R))
    grid = Grid.around_ball(small, cells)
    abar = model_matrix(a, R, k, r, cells)
    mask = grid.ball_mask(small)
    deviation = np.abs(a.sample(grid) - abar.a)[mask]
    j2 = float(np.sum(deviation)) * grid.cell_volume
    sharp = a_sharp(a, m + 2, R, setup.chain, setup.cfg, setup.grid)
    scale = (k * r) ** group.Q * sharp
    if scale > 0:
        ratio = j2 / scale
    else:
        ratio = 0.0 if j2 == 0.0 else float("inf")
    return {"j2": j2, "a_sharp": sharp, "ratio": ratio, "branch": float(k * r >= R)}


def pointwise_terms(
    a: CoefficientField,
    u: TestFunction,
    p: float,
    alpha: float,
    setup: MaximalSetup,
    m: int = 0,
) -> Dict[str, SampledFunction]:
    """
    逐点估计中与 k 无关的量

    Returns:
        Dict: sharp = max_ij (X_iX_ju)♯, mean = ΣM(X_iX_ju),
        lu = M(|Lu|^p)^{1/p}, weighted = ΣM(|X_iX_ju|^{pα})^{1/(pα)}
    """
    grid, cfg, chain = setup.grid, setup.cfg, setup.chain
    second = second_derivative_fields(u, grid)
    sharp = np.zeros(grid.shape)
    mean = np.zeros(grid.shape)
    weighted = np.zeros(grid.shape)
    for f in second.values():
        sharp = np.maximum(sharp, sharp_maximal_field(f, m + 2, chain, cfg).values)
        mean += hl_maximal_field(f, cfg).values
        weighted += hl_maximal_field(f.with_values(np.abs(f.values) ** (p * alpha)), cfg).values ** (1.0 / (p * alpha))
    lu = variable_apply(a, u, grid)
    lu_max = hl_maximal_field(lu.with_values(np.abs(lu.values) ** p), cfg).values ** (1.0 / p)
    return {
        "sharp": SampledFunction(grid, sharp),
        "mean": SampledFunction(grid, mean),
        "lu": SampledFunction(grid, lu_max),
        "weighted": SampledFunction(grid, weighted),
    }


def pointwise_constants(
    terms: Dict[str, SampledFunction],
    nodes: np.ndarray,
    k: float,
    p: float,
    alpha: float,
    sharp_a: float,
    Q: float,
) -> np.ndarray:
    """
    c(x) = (X_iX_ju)♯(x) / (T1 + T2 + T3)

    T1 = ΣM(X_iX_ju)/k, T2 = k^{2+Q/p}M(|Lu|^p)^{1/p},
    T3 = k^{2+Q/p}(a♯)^{1/(βp)}ΣM(|X_iX_ju|^{pα})^{1/(pα)}, β = α/(α−1)
    """
    beta = alpha / (alpha - 1.0)
    weight = k ** (2.0 + Q / p)
    values = {name: f.values.ravel()[nodes] for name, f in terms.items()}
    denominator = values["mean"] / k + weight * (values["lu"] + sharp_a ** (1.0 / (beta * p)) * values["weighted"])
    out = np.zeros(nodes.size)
    active = values["sharp"] > 0
    with np.errstate(divide="ignore"):
        out[active] = values["sharp"][active] / denominator[active]
    return out


def coefficient_gap(a: CoefficientField, u: TestFunction, R: float, cells: Optional[int] = None) -> Dict[str, float]:
    """逐点 |Lu − L̄u| ≤ Σ|a_ij − ā_ij||X_iX_ju|, ā = (a)_{B_R}"""
    ball = origin_ball(R)
    grid = Grid.around_ball(ball, cells)
    abar = a.average(grid, ball)
    mask = grid.ball_mask(ball)
    lhs = np.abs(variable_apply(a, u, grid).values - model_apply(abar, u, grid).values)
    deviation = np.abs(a.sample(grid) - abar.a)
    rhs = np.zeros(grid.shape)
    for (i, j), f in second_derivative_fields(u, grid).items():
        rhs += deviation[..., i, j] * np.abs(f.values)
    excess = lhs - rhs
    scale = max(float(np.max(rhs[mask])), 1e-300)
    return {"excess": float(np.max(excess[mask])), "scale": scale}


def verify_thm36(
    a: CoefficientField,
    corpus: Sequence[TestFunction],
    p: float,
    k_values: Sequence[float] = (8, 16),
    radii: Optional[Sequence[float]] = None,
    R: float = 1.0,
    m: int = 0,
    alpha: Optional[float] = None,
    cells: Optional[int] = None,
    samples: int = 64,
    tolerance: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> VerificationReport:
    """
    变系数下 (X_iX_ju)♯ 的逐点估计

    在 B_R 内抽样的节点上求使估计成立的最小 c(x); 另外检查 J₂ 界的两个分支、
    逐点系数差、同心球项 (常系数时与 lemma3 逐项一致) 以及常系数的 a♯ = 0。

    Raises:
        DomainError: α ≤ 1 或语料中有非紧支撑的函数
    """
    alpha = alpha or current_settings().default_alpha
    if alpha <= 1:
        raise DomainError(f"α 必须 > 1, 实际 {alpha}")
    radii = list(radii or [R / 4.0])
    rng = rng or np.random.default_rng(current_settings().seed)
    setup = maximal_setup(R, cells)
    group = setup.grid.group
    report = new_report(
        "thm36", p=p, alpha=alpha, k_values=list(k_values), radii=radii, R=R, m=m, cells=cells, coefficients=a.name
    )

    ok = True
    sharp = a_sharp(a, m + 2, R, setup.chain, setup.cfg, setup.grid)
    if a.vmo_class == "constant" and sharp != 0.0:
        ok = False
        report.notes.append(f"常系数的 a♯ = {sharp:.3e} 不为零")
    report.measurements.append(measurement("a_sharp", None, value=sharp, epsilon=setup.epsilon))

    interior = setup.grid.ball_indices(origin_ball(R))
    nodes = np.sort(rng.choice(interior, size=min(samples, interior.size), replace=False))
    constants: List[float] = []
    for u in corpus:
        if u.support is None:
            raise DomainError(f"{u.name} 没有紧支撑")
        terms = pointwise_terms(a, u, p, alpha, setup, m)
        for k in k_values:
            c = pointwise_constants(terms, nodes, k, p, alpha, sharp, group.Q)
            finite = bool(np.all(np.isfinite(c)))
            ok &= finite
            constants.extend(c[np.isfinite(c)].tolist())
            report.measurements.append(
                measurement(
                    f"{u.name}|k={k:g}|pointwise",
                    finite,
                    c_max=float(np.max(c)),
                    c_median=float(np.median(c)),
                    sharp_max=float(np.max(terms["sharp"].values.ravel()[nodes])),
                )
            )

        gap = coefficient_gap(a, u, R, cells)
        holds = gap["excess"] <= 1e-10 * gap["scale"]
        ok &= holds
        report.measurements.append(measurement(f"{u.name}|coefficient_gap", holds, **gap))

        for r in radii:
            for k in k_values:
                abar = model_matrix(a, R, k, r, cells)
                ball_terms = ball_estimate_terms(u, abar, r, k, p, cells, tolerance)
                scale = max(ball_terms["lhs"], ball_terms["A"] + ball_terms["B"] + ball_terms["C"], 1e-300)
                holds = ball_terms["gap"] <= 1e-12 * scale and bool(np.isfinite(ball_terms["c"]))
                ok &= holds
                report.measurements.append(measurement(f"{u.name}|k={k:g}|r={r:g}", holds, **ball_terms))

    for r in radii:
        for k in k_values:
            j2 = j2_bound(a, R, k, r, setup, m, cells)
            finite = bool(np.isfinite(j2["ratio"]))
            ok &= finite
            report.measurements.append(measurement(f"j2|k={k:g}|r={r:g}", finite, **j2))
            if not finite:
                report.notes.append(f"k = {k:g}, r = {r:g}: a♯ = 0 但 J₂ > 0")

    report.constant = max(constants) if constants else None
    report.status = "pass" if ok else "fail"
    return report


def _main_ratio(a: CoefficientField, u: TestFunction, p: float, ball: Ball, cells: int) -> Tuple[float, float, float]:
    """(Σ‖X_iX_ju‖_p, ‖Lu‖_p, 比值) 于 ball"""
    grid = Grid.around_ball(ball, cells)
    mask = grid.ball_mask(ball)
    d2 = sum(f.lp_norm(p, mask) for f in second_derivative_fields(u, grid).values())
    lu = variable_apply(a, u, grid).lp_norm(p, mask)
    if lu == 0.0:
        return d2, lu, (0.0 if d2 == 0.0 else float("inf"))
    return d2, lu, d2 / lu


def mean_zero_defect(u: TestFunction, R: float, cells: Optional[int] = None) -> float:
    """max_ij |∫_{B_R} X_iX_ju| / ∫_{B_R}|X_iX_ju|"""
    ball = origin_ball(R)
    grid = Grid.around_ball(ball, cells)
    mask = grid.ball_mask(ball)
    worst = 0.0
    for f in second_derivative_fields(u, grid).values():
        total = abs(f).integrate(mask)
        if total > 0:
            worst = max(worst, abs(f.integrate(mask)) / total)
    return worst


def empirical_constant(
    a: CoefficientField, corpus: Sequence[TestFunction], p: float, R: float, cells: int
) -> Tuple[float, Dict[str, float]]:
    """C_emp = max_u Σ‖X_iX_ju‖_{L^p(B_R)} / ‖Lu‖_{L^p(B_R)}"""
    ratios = {u.name: _main_ratio(a, u, p, origin_ball(R), cells)[2] for u in corpus}
    return max(ratios.values()), ratios


def absorption_exponents(p: float, alpha: float) -> Tuple[float, float]:
    """返回 (p₁, β): αp₁ < p, β = α/(α−1)"""
    if alpha <= 1.0:
        raise DomainError(f"alpha 必须 > 1, 实际 {alpha}")
    return ABSORPTION_FILL * p / alpha, alpha / (alpha - 1.0)


def absorption_weight(sharp: float, p: float, alpha: float) -> float:
    """a♯^{1/(βp₁)}, 吸收要求它 < 1/2"""
    p1, beta = absorption_exponents(p, alpha)
    if sharp <= 0.0:
        return 0.0
    return float(sharp ** (1.0 / (beta * p1)))


def verify_main(
    a: CoefficientField,
    corpus: Optional[Sequence[TestFunction]] = None,
    p_values: Sequence[float] = (2.0,),
    R: float = 1.0,
    cells: Optional[int] = None,
    amplitudes: Sequence[float] = (0.1, 0.2, 0.4),
    m: int = 0,
    alpha: Optional[float] = None,
) -> VerificationReport:
    """
    Σ‖X_iX_ju‖_{L^p(B_R)} ≤ C‖Lu‖_{L^p(B_R)} 的经验常数

    C_emp 必须有限且在网格加密下漂移 ≤ 20%; 同时检查 X_iX_ju 的零均值与
    伸缩不变性。C_emp 随系数振幅下降时判为失败。a♯ 经 β, p₁ 加权后
    不小于 1/2 时吸收不成立, 结果为 inconclusive。
    """
    cells = cells or current_settings().cells_per_ball
    alpha = current_settings().default_alpha if alpha is None else alpha
    corpus = list(corpus or default_corpus(R))
    report = new_report(
        "main", p_values=list(p_values), R=R, cells=cells, amplitudes=list(amplitudes), coefficients=a.name
    )
    ok = True
    worst = 0.0

    for u in corpus:
        if u.support is None:
            raise DomainError(f"{u.name} 没有紧支撑")
        defect = mean_zero_defect(u, R, cells)
        holds = defect <= 1e-4
        ok &= holds
        report.measurements.append(measurement(f"{u.name}|mean_zero", holds, defect=defect))

    for p in p_values:
        for u in corpus:
            d2, lu, coarse = _main_ratio(a, u, p, origin_ball(R), cells)
            if lu == 0.0 and d2 > 0.0:
                ok = False
                report.notes.append(f"{u.name}, p = {p:g}: ‖Lu‖ = 0 而 ‖D²u‖ ≠ 0, 离散不一致")
                report.measurements.append(measurement(f"{u.name}|p={p:g}", False, d2=d2, lu=lu))
                continue
            fine = _main_ratio(a, u, p, origin_ball(R), 2 * cells)[2]
            drift = abs(fine - coarse) / coarse if coarse > 0 else 0.0

            _, _, scaled = _main_ratio(a.dilated(2.0), u.dilated(2.0), p, origin_ball(R / 2.0), cells)
            scaling = abs(scaled - coarse) / coarse if coarse > 0 else scaled
            holds = bool(np.isfinite(coarse)) and drift <= 0.2 and scaling <= 1e-6
            ok &= holds
            worst = max(worst, coarse, fine)
            report.measurements.append(
                measurement(
                    f"{u.name}|p={p:g}",
                    holds,
                    d2=d2,
                    lu=lu,
                    ratio=coarse,
                    ratio_refined=fine,
                    drift=drift,
                    scaling_drift=scaling,
                )
            )
            if drift > 0.2:
                report.notes.append(f"{u.name}, p = {p:g}: 加密后 C 漂移 {drift:.1%}")

    p0 = p_values[0]
    sweep: List[float] = []
    for amplitude in amplitudes:
        c, _ = empirical_constant(CoefficientField.loglog_vmo(amplitude), corpus, p0, R, cells)
        holds = bool(np.isfinite(c)) and (not sweep or c >= sweep[-1] * (1.0 - MONOTONE_SLACK))
        ok &= holds
        sweep.append(c)
        report.measurements.append(measurement(f"amplitude={amplitude:g}", holds, c_emp=c))
    if any(b < a_ * (1.0 - MONOTONE_SLACK) for a_, b in zip(sweep, sweep[1:])):
        report.notes.append(f"C_emp 随振幅不单调: {[round(c, 6) for c in sweep]}")

    # 吸收项: a♯ 经 β, p₁ 加权后必须 < 1/2, 否则半径 R 不够小
    setup = maximal_setup(R, cells)
    r_sharp = min(current_settings().fefferman_stein_gamma * R, setup.epsilon)
    sharp = a_sharp(a, m + 2, r_sharp, setup.chain, setup.cfg, setup.grid)
    absorbed = True
    for p in p_values:
        p1, beta = absorption_exponents(p, alpha)
        weight = absorption_weight(sharp, p, alpha)
        holds = weight < 0.5
        absorbed &= holds
        report.measurements.append(measurement(f"absorption|p={p:g}", holds, weight=weight, p1=p1, beta=beta))
    report.measurements.append(measurement("a_sharp", absorbed, value=sharp, r=r_sharp))
    if not absorbed:
        report.notes.append(f"a♯ = {sharp:.3g} 加权后不小于 1/2, 需要更小的 R")

    report.constant = finite_or_none(worst)
    if not ok:
        report.status = "fail"
    elif not absorbed:
        report.status = "inconclusive"
    else:
        report.status = "pass"
    return report
