from dataclasses import replace
from typing import Callable, Dict, List, Optional, Sequence
import logging

import numpy as np

from carnot_lab.config import current_settings
from carnot_lab.core.calculus import d_k_magnitude, horizontal_derivative, multi_indices, normalize_affine
from carnot_lab.core.corpus import X, Y, TestFunction, cutoff, gauge_bump, oscillatory_bump, polynomial
from carnot_lab.core.dirichlet import MIN_CELLS_ACROSS, harmonic_replacement, harmonic_zoom
from carnot_lab.core.group import Ball
from carnot_lab.core.grid import Grid, SampledFunction
from carnot_lab.core.maximal import BallLattice, MaximalConfig, hl_maximal_field
from carnot_lab.core.model import as_elliptic, model_apply, newtonian_potential
from carnot_lab.exceptions.custom_exceptions import BaseCarnotError, DegenerateInputError, DomainError
from carnot_lab.schemas.report import VerificationReport
from carnot_lab.services.common import (
    ball_mean,
    combine_status,
    finite_or_none,
    fit_loglog,
    measurement,
    new_report,
    origin_ball,
    region_grid,
    second_derivative_fields,
    slope_status,
    support_radius,
)

logger = logging.getLogger(__name__)

# lemma1 的三阶差分对求解误差敏感, 用更严的停止阈值
LEMMA1_TOLERANCE = 1e-11


def lemma_polynomials() -> List[TestFunction]:
    """调和三次式 (ā = I 时 h = u) 与非调和的 x³"""
    return [
        polynomial(X ** 3 - 3 * X * Y ** 2, "harmonic_cubic"),
        polynomial(X ** 3, "x_cubed"),
    ]


# ---------------------------------------------------------------- 三阶导数估计 (lemma1)


def third_derivative_sup(h: SampledFunction, ball: Ball) -> float:
    """max_{i,j,k} sup_ball |X_iX_jX_k h| (差分)"""
    mask = h.grid.ball_mask(ball)
    q = h.grid.group.q
    return max(
        float(np.max(np.abs(horizontal_derivative(h, index).values[mask])))
        for index in multi_indices(3, q)
    )


def second_derivative_l1(u: TestFunction, ball: Ball, cells: Optional[int] = None) -> float:
    """Σ_{i,j} ‖X_iX_ju‖_{L¹(ball)} (解析导数求积)"""
    grid, mask, _ = region_grid(ball, u, cells)
    return sum(f.lp_norm(1.0, mask) for f in second_derivative_fields(u, grid).values())


def lemma1_terms(
    u: TestFunction,
    abar,
    R: float,
    cells: Optional[int] = None,
    tolerance: float = LEMMA1_TOLERANCE,
) -> Dict[str, float]:
    """
    sup_{B_1}|X_iX_jX_k h| 与 Σ‖X_iX_ju‖_{L¹(B_R)}, h 为 B_R 上的调和延拓

    Returns:
        Dict: third, l1, ratio (分子分母同为零时比值为 0)
    """
    h, history = harmonic_zoom(u, origin_ball(R), 1.0, abar, cells, tolerance=tolerance)
    third = third_derivative_sup(h, origin_ball(1.0))
    l1 = second_derivative_l1(u, origin_ball(R), cells)
    if l1 > 0:
        ratio = third / l1
    else:
        ratio = 0.0 if third <= 1e-8 else float("inf")
    return {"third": third, "l1": l1, "ratio": ratio, "levels": float(len(history))}


def affine_invariance(
    u: TestFunction,
    abar,
    R: float,
    Lambda: float,
    cells: Optional[int] = None,
    tolerance: float = LEMMA1_TOLERANCE,
) -> Dict[str, float]:
    """
    ũ = u + c₀ + Σc_ix_i 的调和延拓与 h 的三阶导数之差

    系数由 B_4, B_{4Λ} 上的仿射归一化确定; 返回相对差 drift。
    """
    grid = Grid.around_ball(origin_ball(R), cells)
    _, coefficients = normalize_affine(u.sample(grid), Lambda)
    shifted = u.with_affine(coefficients)

    h, _ = harmonic_zoom(u, origin_ball(R), 1.0, abar, cells, tolerance=tolerance)
    h_shifted, _ = harmonic_zoom(shifted, origin_ball(R), 1.0, abar, cells, tolerance=tolerance)
    mask = h.grid.ball_mask(origin_ball(1.0))
    scale, drift = 0.0, 0.0
    for index in multi_indices(3, h.grid.group.q):
        a = horizontal_derivative(h, index).values[mask]
        b = horizontal_derivative(h_shifted, index).values[mask]
        scale = max(scale, float(np.max(np.abs(a))))
        drift = max(drift, float(np.max(np.abs(a - b))))
    return {"drift": drift / max(scale, 1e-12), "absolute": drift, **{k: float(v) for k, v in coefficients.items()}}


def lemma1_sign_test(
    u: TestFunction,
    abar,
    radius: float = 4.0,
    cells: Optional[int] = None,
    samples: int = 64,
    rng: Optional[np.random.Generator] = None,
    tolerance: float = 0.05,
) -> Dict[str, float]:
    """
    重建 v = h − φu 与 w = −∫Γ_ā(y⁻¹∘x) f(y) dy, 检查 |v| ≤ w

    φ 在 B_{3r/4} 上为 0, 在 ∂B_r 附近为 1; f = |φL̄u| + |uL̄φ| + 2|Σā_ij X_iφ X_ju|
    限制在 B_r 上, 于是 |L̄v| ≤ f。离散 v 与求积 w 的误差用 tolerance·max w 吸收。

    Returns:
        Dict: violation (max(|v| − w)), w_max, v_max, passed (1/0)
    """
    abar = as_elliptic(abar)
    rng = rng or np.random.default_rng(current_settings().seed)
    ball = origin_ball(radius)
    grid = Grid.around_ball(ball, max(cells or current_settings().cells_per_ball, MIN_CELLS_ACROSS))
    h = harmonic_replacement(u, ball, abar, grid=grid)

    inner = cutoff(0.75, radius)
    pts = grid.points
    phi = 1.0 - inner.evaluate(pts)
    u_vals = u.evaluate(pts)
    lu = model_apply(abar, u, grid).values
    l_phi = -model_apply(abar, inner, grid).values
    cross = np.zeros(grid.shape)
    for i in range(grid.group.q):
        for j in range(grid.group.q):
            cross += abar.a[i, j] * (-inner.evaluate(pts, (i,))) * u.evaluate(pts, (j,))
    f = (np.abs(phi * lu) + np.abs(u_vals * l_phi) + 2.0 * np.abs(cross)) * grid.ball_mask(ball)

    interior = grid.ball_indices(ball)
    chosen = np.sort(rng.choice(interior, size=min(samples, interior.size), replace=False))
    targets = pts.reshape(-1, grid.group.n)[chosen]
    w = -newtonian_potential(abar, SampledFunction(grid, f), targets)
    v = (h.values - phi * u_vals).ravel()[chosen]

    w_max = float(np.max(w))
    violation = float(np.max(np.abs(v) - w))
    return {
        "violation": violation,
        "w_min": float(np.min(w)),
        "w_max": w_max,
        "v_max": float(np.max(np.abs(v))),
        "passed": float(violation <= tolerance * w_max),
    }


def verify_lemma1(
    abars: Sequence,
    corpus: Sequence[TestFunction],
    Lambda: float,
    R: Optional[float] = None,
    cells: Optional[int] = None,
    tolerance: float = LEMMA1_TOLERANCE,
    sign_member: Optional[TestFunction] = None,
) -> VerificationReport:
    """
    三阶导数估计: sup_{B_1}|X_iX_jX_k h| / Σ‖X_iX_ju‖_{L¹(B_R)} 在语料与 ā 样本上有界

    Raises:
        DomainError: R < 4Λ²
    """
    R = R if R is not None else 4.0 * Lambda ** 2
    if R < 4.0 * Lambda ** 2 * (1 - 1e-12):
        raise DomainError(f"R = {R:g} 小于 4Λ² = {4 * Lambda ** 2:g}")
    abars = [as_elliptic(a) for a in abars]
    report = new_report("lemma1", R=R, Lambda=Lambda, cells=cells, abars=[a.to_list() for a in abars])

    ok = True
    ratios: Dict[str, List[float]] = {}
    for n, abar in enumerate(abars):
        for u in corpus:
            terms = lemma1_terms(u, abar, R, cells, tolerance)
            finite = bool(np.isfinite(terms["ratio"]))
            ok &= finite
            ratios.setdefault(u.name, []).append(terms["ratio"])
            report.measurements.append(measurement(f"{u.name}|abar={n}", finite, **terms))

    for name, values in ratios.items():
        positive = [v for v in values if v > 0]
        spread = max(positive) / min(positive) if positive else 1.0
        report.measurements.append(measurement(f"{name}|spread", None, spread=spread))

    for u in corpus:
        if u.window is not None:
            continue
        result = affine_invariance(u, abars[0], R, Lambda, cells, tolerance)
        same = result["drift"] <= 1e-2
        ok &= same
        report.measurements.append(measurement(f"{u.name}|affine", same, **result))
        if not same:
            report.notes.append(f"{u.name}: 仿射归一化后三阶导数相对差 {result['drift']:.2e}")

    sign = lemma1_sign_test(sign_member or polynomial(X ** 2 + Y ** 2, "x2_plus_y2"), abars[0], cells=cells)
    ok &= bool(sign["passed"])
    report.measurements.append(measurement("sign_test", bool(sign["passed"]), **{k: v for k, v in sign.items() if k != "passed"}))
    report.notes.append("三阶导数由解网格上的差分求出, 含离散噪声")

    report.constant = finite_or_none(max(max(v) for v in ratios.values())) if ratios else None
    report.status = "pass" if ok else "fail"
    return report


# ---------------------------------------------------------------- 调和替换的衰减 (lemma2)


def lemma2_ratio(
    u: TestFunction,
    abar,
    k: float,
    r: float,
    cells: Optional[int] = None,
    tolerance: Optional[float] = None,
) -> Dict[str, float]:
    """
    osc = Σ_ij avg_{B_r}|X_iX_jh − (X_iX_jh)_{B_r}|, h 为 B_{kr} 上的调和延拓;
    rhs = Σ_ij avg_{B_kr}|X_iX_ju|
    """
    big = origin_ball(k * r)
    h, _ = harmonic_zoom(u, big, r, abar, cells, tolerance=tolerance)
    mask = h.grid.ball_mask(origin_ball(r))
    osc = 0.0
    for index in multi_indices(2, h.grid.group.q):
        d2 = horizontal_derivative(h, index)
        osc += abs(d2 - d2.average(mask)).average(mask)

    grid, big_mask, full = region_grid(big, u, cells)
    rhs = sum(ball_mean(abs(f), big_mask, big, full) for f in second_derivative_fields(u, grid).values())
    ratio = osc / rhs if rhs > 0 else float("inf")
    return {"osc": osc, "rhs": rhs, "ratio": ratio}


def verify_lemma2(
    abar,
    corpus: Optional[Sequence[TestFunction]] = None,
    k_values: Sequence[float] = (8, 16, 32, 64),
    r: float = 1.0,
    cells: Optional[int] = None,
    tolerance: Optional[float] = None,
    Lambda: Optional[float] = None,
) -> VerificationReport:
    """
    调和延拓二阶导数的振荡随 k 按 1/k 衰减: log(osc/rhs) 对 log k 的斜率在 [−1.5, −0.5]

    少于 3 个可用的 k 或 R² 不足时报告为 inconclusive。
    """
    abar = as_elliptic(abar)
    corpus = list(corpus or lemma_polynomials())
    report = new_report("lemma2", k_values=list(k_values), r=r, cells=cells, abar=abar.to_list())
    if Lambda is not None:
        small = [k for k in k_values if k < 4.0 * Lambda ** 3]
        if small:
            report.notes.append(f"k = {small} 小于 4Λ³ = {4 * Lambda ** 3:.3g}")

    statuses, slopes, fits = [], [], []
    for u in corpus:
        ks, ratios = [], []
        for k in k_values:
            try:
                terms = lemma2_ratio(u, abar, k, r, cells, tolerance)
            except BaseCarnotError as e:
                report.notes.append(f"{u.name}, k = {k:g}: {e.detail}")
                continue
            ks.append(k)
            ratios.append(terms["ratio"])
            report.measurements.append(measurement(f"{u.name}|k={k:g}", None, **terms))
        fit = fit_loglog(ks, ratios)
        status = slope_status(fit, -1.5, -0.5)
        statuses.append(status)
        if fit is not None:
            fits.append(fit)
            slopes.append(fit.slope)
            report.measurements.append(
                measurement(f"{u.name}|fit", status == "pass", slope=fit.slope, intercept=fit.intercept, r2=fit.r2)
            )
        else:
            report.notes.append(f"{u.name}: 可用的 k 不足")

    if fits:
        worst = max(fits, key=lambda f: f.slope)
        report.slope, report.intercept = worst.slope, worst.intercept
        report.r2 = min(f.r2 for f in fits)
    report.status = combine_status(statuses) if statuses else "inconclusive"
    return report


# ---------------------------------------------------------------- 紧支撑内部估计 (bb1)


SIGMAS = (0.55, 0.65, 0.75, 0.85, 0.95)


def bb1_members(k: float, r: float) -> List[TestFunction]:
    """B_{kr} 内紧支撑的 v: 固定半径 r 的鼓包, 铺满 0.9kr 的鼓包, 半径 kr/2 的振荡鼓包"""
    return [
        replace(gauge_bump(r), name="bump"),
        replace(gauge_bump(0.9 * k * r), name="spread"),
        replace(oscillatory_bump(4.0 / r, 0.5 * k * r), name="oscillatory"),
    ]


def _phi_quantities(v: TestFunction, grid: Grid, p: float, r: float) -> Dict[str, float]:
    """φ_j = sup_σ (1−σ)^j r^j ‖D^j v‖_{L^p(B_σr)}, j = 0, 1, 2"""
    rho = grid.group.gauge_norm(grid.points)
    derivatives = [d_k_magnitude(v, j, grid) for j in range(3)]
    out = {}
    for j, dj in enumerate(derivatives):
        out[f"phi{j}"] = max(((1 - s) * r) ** j * dj.lp_norm(p, rho < s * r) for s in SIGMAS)
    return out


def pointwise_potential_constant(v: TestFunction, abar, k: float, r: float, cells: int = 16) -> float:
    """
    max |v(x)| / ((kr)²·M(L̄v)(x)), x 取 v ≠ 0 的节点

    网格与球格只覆盖支撑与 B_kr 中较小者的两倍; 球族越小 M 越小,
    因此得到的是常数的上界。
    """
    extent = min(support_radius(v), k * r)
    grid = Grid.around_ball(origin_ball(2.0 * extent), cells)
    lattice = BallLattice.for_grid(grid, extent)
    maximal = hl_maximal_field(model_apply(abar, v, grid), MaximalConfig(lattice))
    values = np.abs(v.sample(grid).values)
    active = (values > 0) & origin_ball(extent).contains(grid.points)
    if not np.any(active):
        raise DegenerateInputError(f"{v.name} 在网格节点上恒为零")
    m = maximal.values[active]
    if np.any(m == 0):
        return float("inf")
    return float(np.max(values[active] / ((k * r) ** 2 * m)))


def bb1_terms(v: TestFunction, abar, p: float, k: float, r: float, cells: Optional[int] = None) -> Dict[str, float]:
    """
    ‖D²v‖_{L^p(B_r)}/‖L̄v‖_{L^p(B_kr)} 及证明中的辅助量

    Raises:
        DegenerateInputError: L̄v ≡ 0
    """
    abar = as_elliptic(abar)
    small_grid, small_mask, _ = region_grid(origin_ball(r), v, cells)
    d2 = d_k_magnitude(v, 2, small_grid).lp_norm(p, small_mask)
    lv_small = model_apply(abar, v, small_grid).lp_norm(p, small_mask)
    v_small = v.sample(small_grid).lp_norm(p, small_mask)

    big_grid, big_mask, _ = region_grid(origin_ball(k * r), v, cells)
    lv = model_apply(abar, v, big_grid).lp_norm(p, big_mask)
    v_norm = v.sample(big_grid).lp_norm(p, big_mask)
    if lv == 0.0:
        raise DegenerateInputError(f"{v.name}: ‖L̄v‖ = 0")

    kr2 = (k * r) ** 2
    terms = {
        "d2": d2,
        "lv": lv,
        "ratio": d2 / lv,
        "newtonian": v_norm / (kr2 * lv),
        "local": r ** 2 * d2 / (r ** 2 * lv + v_norm),
        "pointwise": pointwise_potential_constant(v, abar, k, r),
    }
    phi = _phi_quantities(v, small_grid, p, r)
    terms.update(phi)
    base = r ** 2 * lv_small + v_small
    terms["phi_constant"] = phi["phi2"] / base if base > 0 else 0.0
    return terms


def verify_lemma_bb1(
    abar,
    p: float,
    k_values: Sequence[float] = (2, 4, 8, 16),
    r: float = 1.0,
    cells: Optional[int] = None,
    members: Optional[Callable[[float, float], List[TestFunction]]] = None,
) -> VerificationReport:
    """
    ‖D²v‖_{L^p(B_r)} ≤ ck²‖L̄v‖_{L^p(B_kr)}: 比值对 k 的拟合斜率 ≤ 2.3,
    且逐点位势界 |v| ≤ c(kr)²M(L̄v) 以同一个 c 成立
    """
    abar = as_elliptic(abar)
    members = members or bb1_members
    report = new_report("bb1", p=p, k_values=list(k_values), r=r, cells=cells, abar=abar.to_list())

    series: Dict[str, Dict[str, List[float]]] = {}
    pointwise: List[float] = []
    for k in k_values:
        for v in members(k, r):
            terms = bb1_terms(v, abar, p, k, r, cells)
            pointwise.append(terms["pointwise"])
            entry = series.setdefault(v.name, {"k": [], "ratio": []})
            entry["k"].append(k)
            entry["ratio"].append(terms["ratio"])
            report.measurements.append(measurement(f"{v.name}|k={k:g}", None, **terms))

    statuses, fits = [], []
    for name, entry in series.items():
        fit = fit_loglog(entry["k"], entry["ratio"])
        status = slope_status(fit, upper=2.3)
        statuses.append(status)
        if fit is not None:
            fits.append(fit)
            report.measurements.append(
                measurement(f"{name}|fit", status == "pass", slope=fit.slope, intercept=fit.intercept, r2=fit.r2)
            )

    c = max(pointwise) if pointwise else float("inf")
    if not np.isfinite(c):
        statuses.append("fail")
        report.notes.append("逐点位势界在某些节点上 M(L̄v) = 0")
    else:
        report.constant = c
    if fits:
        worst = max(fits, key=lambda f: f.slope)
        report.slope, report.intercept = worst.slope, worst.intercept
        report.r2 = min(f.r2 for f in fits)
    report.status = combine_status(statuses) if statuses else "inconclusive"
    return report


# ---------------------------------------------------------------- 同心球估计 (lemma3)


def ball_estimate_terms(
    u: TestFunction,
    abar,
    r: float,
    k: float,
    p: float,
    cells: Optional[int] = None,
    tolerance: Optional[float] = None,
) -> Dict[str, float]:
    """
    同心球 B_r ⊂ B_kr 上的估计项

    lhs = max_ij avg_{B_r}|X_iX_ju − (X_iX_ju)_{B_r}|,
    mean = Σ_ij avg_{B_kr}|X_iX_ju|, lu = (avg_{B_kr}|L̄u|^p)^{1/p},
    c = lhs / (mean/k + k^{2+Q/p}·lu); 另外在调和延拓的网格上重算
    A + B + C 分解并记录三角不等式的余量 gap (应 ≤ 0)。
    """
    abar = as_elliptic(abar)
    small, big = origin_ball(r), origin_ball(k * r)
    group = small.group

    grid = Grid.around_ball(small, cells)
    mask = grid.ball_mask(small)
    second = second_derivative_fields(u, grid)
    lhs = max(abs(f - f.average(mask)).average(mask) for f in second.values())

    big_grid, big_mask, full = region_grid(big, u, cells)
    mean = sum(ball_mean(abs(f), big_mask, big, full) for f in second_derivative_fields(u, big_grid).values())
    lu = model_apply(abar, u, big_grid)
    lu_term = ball_mean(lu.with_values(np.abs(lu.values) ** p), big_mask, big, full) ** (1.0 / p)

    weight = k ** (2.0 + group.Q / p)
    denominator = mean / k + weight * lu_term
    if lhs <= 1e-14:
        c = 0.0
    else:
        c = lhs / denominator if denominator > 0 else float("inf")

    h, _ = harmonic_zoom(u, big, r, abar, cells, tolerance=tolerance)
    h_mask = h.grid.ball_mask(small)
    gap, A_max, B_max, C_max = -np.inf, 0.0, 0.0, 0.0
    for index in second:
        du = u.sample(h.grid, index)
        dh = horizontal_derivative(h, index)
        diff = du - dh
        lhs_h = abs(du - du.average(h_mask)).average(h_mask)
        A = abs(diff).average(h_mask)
        B = abs(dh - dh.average(h_mask)).average(h_mask)
        C = abs(diff.average(h_mask))
        gap = max(gap, lhs_h - (A + B + C))
        A_max, B_max, C_max = max(A_max, A), max(B_max, B), max(C_max, C)

    return {
        "lhs": lhs,
        "mean": mean,
        "lu": lu_term,
        "c": c,
        "A": A_max,
        "B": B_max,
        "C": C_max,
        "gap": float(gap),
    }


def verify_lemma3(
    abar,
    corpus: Sequence[TestFunction],
    p: float,
    k_values: Sequence[float] = (8, 16, 32, 64),
    r: float = 0.25,
    cells: Optional[int] = None,
    tolerance: Optional[float] = None,
) -> VerificationReport:
    """
    avg_{B_r}|X_iX_ju − (X_iX_ju)_{B_r}| ≤ (c/k)Σavg_{B_kr}|X_iX_ju| + ck^{2+Q/p}(avg_{B_kr}|L̄u|^p)^{1/p}

    记录每个 (u, k) 的最小 c 及其跨 k 的离散程度; A + B + C 三角不等式必须精确成立。
    """
    abar = as_elliptic(abar)
    report = new_report("lemma3", p=p, k_values=list(k_values), r=r, cells=cells, abar=abar.to_list())
    ok = True
    constants: List[float] = []
    for u in corpus:
        per_k = []
        for k in k_values:
            terms = ball_estimate_terms(u, abar, r, k, p, cells, tolerance)
            scale = max(terms["lhs"], terms["A"] + terms["B"] + terms["C"], 1e-300)
            holds = terms["gap"] <= 1e-12 * scale
            finite = bool(np.isfinite(terms["c"]))
            ok &= holds and finite
            per_k.append(terms["c"])
            report.measurements.append(measurement(f"{u.name}|k={k:g}|r={r:g}", holds and finite, **terms))
        positive = [c for c in per_k if c > 0 and np.isfinite(c)]
        if positive:
            report.measurements.append(measurement(f"{u.name}|spread", None, spread=max(positive) / min(positive)))
        constants.extend(per_k)

    finite = [c for c in constants if np.isfinite(c)]
    report.constant = max(finite) if finite else None
    if not ok:
        report.notes.append("存在无穷大的 c 或 A + B + C 分解不成立")
    report.status = "pass" if ok else "fail"
    return report
