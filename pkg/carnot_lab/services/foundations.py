from typing import Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
import sympy as sp

from carnot_lab.config import current_settings
from carnot_lab.core.calculus import (
    commutator_check,
    cutoff_constants,
    horizontal_derivative,
    multi_indices,
    normalize_affine,
)
from carnot_lab.core.corpus import (
    X,
    Y,
    T,
    TestFunction,
    cutoff,
    default_corpus,
    gauge_bump,
    polynomial,
    polynomial_corpus,
)
from carnot_lab.core.dirichlet import (
    MIN_CELLS_ACROSS,
    DiscreteDirichletProblem,
    discrete_energy,
    harmonic_replacement,
    max_principle_check,
    solve_dirichlet,
)
from carnot_lab.core.group import (
    HEISENBERG,
    Ball,
    CarnotGroup,
    GroupPoint,
    cc_distance_approx,
    estimate_equivalence_constant,
    estimate_quasi_triangle_constant,
)
from carnot_lab.core.grid import Grid, SampledFunction
from carnot_lab.core.maximal import (
    BallLattice,
    DomainChain,
    MaximalConfig,
    a_sharp,
    fefferman_stein_ratio,
    hl_maximal_field,
    maximal_table,
    sharp_maximal_field,
    vmo_modulus,
)
from carnot_lab.core.model import (
    CoefficientField,
    EllipticMatrix,
    fd_residual,
    gamma_normalization,
    gamma_values,
    interior_mask,
    model_apply,
    mollified_point_mass,
    newtonian_potential,
)
from carnot_lab.exceptions.custom_exceptions import BallOutsideGridError
from carnot_lab.schemas.report import VerificationReport
from carnot_lab.services.common import fit_loglog, measurement, new_report, origin_ball

logger = logging.getLogger(__name__)


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    """max |a − b| / max(1, |b|)"""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def _finish(report: VerificationReport, results: Dict[str, bool]) -> VerificationReport:
    failed = [name for name, ok in results.items() if not ok]
    for name in failed:
        report.notes.append(f"{name} 未通过")
    report.status = "fail" if failed else "pass"
    logger.info(f"{report.check}: {len(results) - len(failed)}/{len(results)} 项通过")
    return report


def _random_elliptic(count: int, rng: np.random.Generator, mu: float = 0.5) -> List[EllipticMatrix]:
    """单位矩阵加 count 个 μ 类中的随机矩阵"""
    return [EllipticMatrix.identity()] + [EllipticMatrix.random(mu, rng) for _ in range(count)]


# ---------------------------------------------------------------- group


def sliced_ball_volume(ball: Ball, grid: Grid) -> float:
    """
    与 ball_volume 相同的节点计数, 但逐 x 切片进行, 不生成整个网格的坐标数组

    Raises:
        BallOutsideGridError: 球不在网格盒子内
    """
    if not grid.contains_ball(ball):
        raise BallOutsideGridError(ball.center.coords, ball.radius)
    lo, hi = ball.bounding_box()
    axes = [ax[(ax >= l - 1e-12) & (ax <= h + 1e-12)] for ax, l, h in zip(grid.axes, lo, hi)]
    count = 0
    for x0 in axes[0]:
        pts = np.stack(np.meshgrid(np.array([x0]), *axes[1:], indexing="ij"), axis=-1)
        count += int(np.count_nonzero(ball.contains(pts)))
    return count * grid.cell_volume


def group_check(
    samples: int = 10_000,
    volume_cells: int = 256,
    cc_resolution: int = 48,
    rng: Optional[np.random.Generator] = None,
    group: CarnotGroup = HEISENBERG,
) -> VerificationReport:
    """
    群公理、伸缩、规范与体积律

    公理在 [−10, 10]ⁿ 中的随机三元组上以 1e-12 的相对误差检查;
    体积比 |B(0,2r)|/|B(0,r)| 在同一网格 (h = 4r/volume_cells) 上计数, 与 2^Q 的偏差 ≤ 1%。
    """
    rng = rng or np.random.default_rng(current_settings().seed)
    report = new_report("group-check", samples=samples, volume_cells=volume_cells, cc_resolution=cc_resolution)
    a, b, c = (rng.uniform(-10.0, 10.0, size=(samples, group.n)) for _ in range(3))
    lam = rng.uniform(0.5, 3.0, size=(samples, 1))
    zero = np.zeros(group.n)

    errors = {
        "associativity": _relative(group.compose(group.compose(a, b), c), group.compose(a, group.compose(b, c))),
        "identity": _relative(group.compose(a, zero), a),
        "inverse": _relative(group.compose(a, group.inverse(a)), np.zeros_like(a)),
        "dilation_automorphism": _relative(
            group.dilate(lam, group.compose(a, b)), group.compose(group.dilate(lam, a), group.dilate(lam, b))
        ),
        "norm_homogeneity": _relative(group.gauge_norm(group.dilate(lam, a)), lam[:, 0] * group.gauge_norm(a)),
        "norm_symmetry": _relative(group.gauge_norm(group.inverse(a)), group.gauge_norm(a)),
        "left_invariance": _relative(
            group.quasi_distance(group.compose(c, a), group.compose(c, b)), group.quasi_distance(a, b)
        ),
    }
    results = {}
    for name, error in errors.items():
        results[name] = error <= 1e-12
        report.measurements.append(measurement(name, results[name], error=error))

    # ρ(b) ≤ K(ρ(a) + ρ(a⁻¹∘b)) ⇒ d(a, b) ≥ ρ(b)/K − ρ(a)
    K = max(estimate_quasi_triangle_constant(group, samples, rng), 1.0)
    equivalence = estimate_equivalence_constant(group, samples, rng)
    margin = group.quasi_distance(a, b) - (group.gauge_norm(b) / K - group.gauge_norm(a))
    results["reverse_triangle"] = bool(np.min(margin) >= -1e-12 * float(np.max(group.gauge_norm(b))))
    report.measurements.append(measurement("quasi_triangle", None, K=K, equivalence=equivalence))
    report.measurements.append(
        measurement("reverse_triangle", results["reverse_triangle"], margin=float(np.min(margin)))
    )

    for r in (0.5, 1.0):
        grid = Grid.around_ball(origin_ball(2.0 * r), volume_cells)
        small = sliced_ball_volume(origin_ball(r), grid)
        ratio = sliced_ball_volume(origin_ball(2.0 * r), grid) / small
        z = GroupPoint((0.25 * r, -0.2 * r, 0.05 * r ** 2), group)
        moved = sliced_ball_volume(Ball(z, r), grid)
        exact = group.analytic_unit_ball_volume * r ** group.Q
        ok = abs(ratio - 2.0 ** group.Q) <= 0.01 * 2.0 ** group.Q and abs(moved - small) <= 0.01 * small
        results[f"volume_law|r={r:g}"] = ok
        report.measurements.append(
            measurement(
                f"volume|r={r:g}",
                ok,
                ratio=ratio,
                volume=small,
                translated=moved,
                analytic=exact,
                relative_to_analytic=abs(small - exact) / exact,
            )
        )

    # x 轴上的线段是水平曲线, 图中的路径恰好落在节点上
    cc = cc_distance_approx(GroupPoint.origin(group), GroupPoint((1.0, 0.0, 0.0), group), cc_resolution)
    results["cc_horizontal_segment"] = abs(cc - 1.0) <= 0.05
    report.measurements.append(measurement("cc_segment", results["cc_horizontal_segment"], distance=cc))

    report.constant = K
    return _finish(report, results)


# ---------------------------------------------------------------- calculus


def gaussian() -> TestFunction:
    return polynomial(sp.exp(-(X ** 2 + Y ** 2) - T ** 2), "gaussian")


def fd_errors(u: TestFunction, cells: Sequence[int], index=(0,), radius: float = 1.0) -> List[float]:
    """网格依次加密时差分 X_I u 与解析值的最大误差"""
    errors = []
    for n in cells:
        grid = Grid.around_ball(origin_ball(radius), n)
        fd = horizontal_derivative(u.sample(grid), index)
        errors.append(float(np.max(np.abs(fd.values - u.evaluate(grid.points, index)))))
    return errors


def calculus_check(
    cells: int = 16,
    refinements: Sequence[int] = (16, 32, 64),
    rng: Optional[np.random.Generator] = None,
) -> VerificationReport:
    """
    交换子恒等式、差分收敛阶、左不变性、1-齐次性、截断常数、零均值与仿射归一化
    """
    rng = rng or np.random.default_rng(current_settings().seed)
    report = new_report("calculus-check", cells=cells, refinements=list(refinements))
    results: Dict[str, bool] = {}
    grid = Grid.around_ball(origin_ball(1.0), cells)
    pts = grid.points
    q = HEISENBERG.q

    worst = 0.0
    for u in polynomial_corpus() + default_corpus(1.0) + [gaussian()]:
        scale = max(1.0, float(np.max(np.abs(u.partial(pts, 2)))))
        worst = max(worst, commutator_check(0, 1, u, grid) / scale)
    results["commutator"] = worst <= 1e-10
    report.measurements.append(measurement("commutator", results["commutator"], deviation=worst))

    # 误差对节点数的对数斜率即观测到的收敛阶 (取负)
    for i in range(q):
        errors = fd_errors(gaussian(), refinements, (i,))
        fit = fit_loglog(refinements, errors)
        order = -fit.slope if fit is not None else 0.0
        ok = fit is not None and fit.points >= 3 and order >= 1.9
        results[f"fd_order|X{i + 1}"] = ok
        values = {f"error_{n}": e for n, e in zip(refinements, errors)}
        report.measurements.append(measurement(f"fd_order|X{i + 1}", ok, order=order, **values))

    z = GroupPoint(tuple(rng.uniform(-0.5, 0.5, size=3)))
    lam = float(rng.uniform(0.5, 2.0))
    shifted_pts = HEISENBERG.compose(z.as_array(), pts)
    scaled_pts = HEISENBERG.dilate(lam, pts)
    invariance, homogeneity = 0.0, 0.0
    for u in [gauge_bump(1.0), gaussian()] + polynomial_corpus():
        moved, dilated = u.translated(z), u.dilated(lam)
        for i in range(q):
            invariance = max(invariance, _relative(moved.evaluate(pts, (i,)), u.evaluate(shifted_pts, (i,))))
            homogeneity = max(
                homogeneity, _relative(dilated.evaluate(pts, (i,)), lam * u.evaluate(scaled_pts, (i,)))
            )
    results["left_invariance"] = invariance <= 1e-10
    results["homogeneity"] = homogeneity <= 1e-10
    report.measurements.append(measurement("left_invariance", results["left_invariance"], error=invariance))
    report.measurements.append(measurement("homogeneity", results["homogeneity"], error=homogeneity, lam=lam))

    fine = Grid.around_ball(origin_ball(1.0), 2 * cells)
    for sigma in (0.6, 0.75, 0.9):
        constants = cutoff_constants(cutoff(sigma, 1.0), fine)
        report.measurements.append(measurement(f"cutoff|sigma={sigma:g}", None, **constants))

    worst_mean = 0.0
    for u in default_corpus(1.0):
        for index in multi_indices(2, q):
            f = u.sample(grid, index)
            total = abs(f).integrate()
            if total > 0:
                worst_mean = max(worst_mean, abs(f.integrate()) / total)
    results["mean_zero"] = worst_mean <= 1e-4
    report.measurements.append(measurement("mean_zero", results["mean_zero"], defect=worst_mean))

    Lambda = 1.5
    big = Grid.around_ball(origin_ball(4.0 * Lambda), max(cells, MIN_CELLS_ACROSS))
    normalized, coefficients = normalize_affine(gauge_bump(2.0).sample(big), Lambda)
    inner = big.ball_mask(origin_ball(4.0))
    outer = big.ball_mask(origin_ball(4.0 * Lambda))
    defect = max(
        [abs(normalized.average(inner))]
        + [abs(horizontal_derivative(normalized, (i,)).average(outer)) for i in range(q)]
    )
    results["affine_normalization"] = defect <= 1e-10 * max(normalized.lp_norm(np.inf), 1.0)
    report.measurements.append(
        measurement("affine_normalization", results["affine_normalization"], defect=defect, **coefficients)
    )
    return _finish(report, results)


# ---------------------------------------------------------------- maximal


def bump_pair(radius: float = 0.3, offset: float = 0.4) -> Tuple[TestFunction, TestFunction]:
    """在 (±offset, 0, 0) 处半径 radius 的两个鼓包; 二者之差在对称网格上积分为零"""
    plus = gauge_bump(radius, GroupPoint((offset, 0.0, 0.0)), name="bump_plus")
    minus = gauge_bump(radius, GroupPoint((-offset, 0.0, 0.0)), name="bump_minus")
    return plus, minus


def maximal_check(
    cells: int = 16,
    p_values: Optional[Sequence[float]] = None,
    r_max: float = 0.8,
    stride: Optional[int] = None,
    table_rows: int = 200,
    rng: Optional[np.random.Generator] = None,
) -> VerificationReport:
    """
    极大算子: 次线性与正齐次性, f♯ ≤ 2Mf, L^p 有界性 (球格加密后漂移 ≤ 15%),
    VMO 模的单调性, 常系数的 a♯ = 0, 区域链的嵌套, 以及零均值鼓包对的
    Fefferman–Stein 比值

    所有算子共用一个球格; 区域链取 ε = r_max, 使局部尖锐极大函数用到全部半径。
    报告附带 η(r) 表与 Ω_0 内 table_rows 个抽样节点的 (x, Mf, f♯) 表。
    """
    rng = rng or np.random.default_rng(current_settings().seed)
    p_values = list(p_values or current_settings().default_p_values)
    report = new_report("maximal", cells=cells, p_values=p_values, r_max=r_max, table_rows=table_rows)
    results: Dict[str, bool] = {}

    grid = Grid.around_ball(origin_ball(1.6), cells)
    lattice = BallLattice.for_grid(grid, r_max, stride=stride)
    cfg = MaximalConfig(lattice)
    chain = DomainChain(base_radius=r_max / current_settings().chain_margin)
    corpus = default_corpus(0.7)

    f = corpus[0].sample(grid)
    g = corpus[2].sample(grid)
    mf, mg = hl_maximal_field(f, cfg), hl_maximal_field(g, cfg)
    excess = float(np.max(hl_maximal_field(f + g, cfg).values - mf.values - mg.values))
    scaling = _relative(hl_maximal_field(-2.5 * f, cfg).values, 2.5 * mf.values)
    results["sublinearity"] = excess <= 1e-12 and scaling <= 1e-12
    report.measurements.append(measurement("sublinearity", results["sublinearity"], excess=excess, scaling=scaling))

    sharp_excess = 0.0
    for u in corpus:
        s = u.sample(grid)
        sharp = sharp_maximal_field(s, 0, chain, cfg)
        sharp_excess = max(sharp_excess, float(np.max(sharp.values - 2.0 * hl_maximal_field(s, cfg).values)))
    results["sharp_below_2M"] = sharp_excess <= 1e-12
    report.measurements.append(measurement("sharp_below_2M", results["sharp_below_2M"], excess=sharp_excess))

    refined = MaximalConfig(lattice.refined())
    worst_drift = 0.0
    for p in p_values:
        for u in corpus:
            s = u.sample(grid)
            norm = s.lp_norm(p)
            coarse = hl_maximal_field(s, cfg).lp_norm(p) / norm
            finer = hl_maximal_field(s, refined).lp_norm(p) / norm
            drift = abs(finer - coarse) / coarse
            worst_drift = max(worst_drift, drift)
            report.measurements.append(
                measurement(f"{u.name}|p={p:g}|lp_bound", drift <= 0.15, ratio=coarse, refined=finer, drift=drift)
            )
            if finer < coarse * (1 - 1e-12):
                report.notes.append(f"{u.name}, p={p:g}: 球格加密后 ‖Mf‖_p 下降")
    results["lp_boundedness"] = worst_drift <= 0.15

    entry = SampledFunction(grid, CoefficientField.loglog_vmo(0.4).sample(grid)[..., 0, 1])
    moduli = [vmo_modulus(entry, 0, r, chain, cfg) for r in lattice.radii]
    results["vmo_monotone"] = all(later >= earlier for earlier, later in zip(moduli, moduli[1:]))
    report.measurements.append(
        measurement("vmo_modulus", results["vmo_monotone"], **{f"r={r:g}": eta for r, eta in zip(lattice.radii, moduli)})
    )
    report.tables["vmo_modulus"] = [{"r": float(r), "eta": float(eta)} for r, eta in zip(lattice.radii, moduli)]
    constant = a_sharp(CoefficientField.constant(EllipticMatrix.identity()), 0, r_max, chain, cfg, grid)
    results["a_sharp_constant"] = constant == 0.0
    report.measurements.append(measurement("a_sharp_constant", results["a_sharp_constant"], value=constant))

    nested = [chain.check_nesting(m, rng=rng) for m in range(3)]
    results["chain_nesting"] = all(nested)
    report.measurements.append(
        measurement("chain_nesting", results["chain_nesting"], **{f"m={m}": float(ok) for m, ok in enumerate(nested)})
    )

    columns, rows = maximal_table(f, 0, chain, cfg, count=table_rows, rng=rng)
    report.tables["samples"] = [dict(zip(columns, map(float, row))) for row in rows]

    plus, minus = bump_pair()
    pair = plus.sample(grid) - minus.sample(grid)
    ratios = {}
    for p in p_values:
        ratios[p] = fefferman_stein_ratio(pair, 0.7, p, cfg, chain)
        report.measurements.append(
            measurement(f"fefferman_stein|p={p:g}", bool(np.isfinite(ratios[p])), ratio=ratios[p])
        )
    results["fefferman_stein"] = all(np.isfinite(v) for v in ratios.values())

    report.constant = max(ratios.values())
    return _finish(report, results)


# ---------------------------------------------------------------- fundamental solution


def potential_residuals(abar, cells: Sequence[int], width: float = 0.5) -> List[float]:
    """内部节点上的 ‖L̄u − f‖_{L²}/‖f‖_{L²}, u 为鼓包 f 的 Newton 位势"""
    residuals = []
    bump = gauge_bump(width)
    for n in cells:
        grid = Grid.around_ball(origin_ball(1.5 * width), n)
        f = bump.sample(grid)
        u = newtonian_potential(abar, f)
        mask = interior_mask(grid, 3)
        residuals.append((model_apply(abar, u) - f).lp_norm(2.0, mask) / f.lp_norm(2.0, mask))
    return residuals


def far_field_error(abar, cells: int = 32, width: float = 0.25, distance: float = 3.0) -> float:
    """光滑点质量的 Newton 位势与 Γ 在规范距离 distance 处的最大相对偏差"""
    grid = Grid.around_ball(origin_ball(2.0 * width), cells)
    mass = mollified_point_mass(grid, width)
    t = distance ** 2 / math.sqrt(HEISENBERG.gauge_constant)
    far = np.array(
        [[distance, 0.0, 0.0], [0.0, distance, 0.0], [-distance, 0.0, 0.0], [0.0, 0.0, t], [0.0, 0.0, -t]]
    )
    potential = newtonian_potential(abar, mass, far)
    return float(np.max(np.abs(potential / gamma_values(abar, far) - 1.0)))


def gamma_check(
    cells: int = 32,
    samples: int = 10_000,
    potential_cells: Sequence[int] = (12, 16, 24),
    rng: Optional[np.random.Generator] = None,
) -> VerificationReport:
    """
    基本解: c_Γ = 1/(2π), −2 次齐次性, 符号与对称性, 差分残差的二阶收敛,
    远场匹配以及 Newton 位势残差随加密的下降
    """
    rng = rng or np.random.default_rng(current_settings().seed)
    report = new_report("gamma-check", cells=cells, samples=samples, potential_cells=list(potential_cells))
    results: Dict[str, bool] = {}
    group = HEISENBERG

    c_gamma = gamma_normalization(group)
    results["normalization"] = abs(c_gamma * 2.0 * math.pi - 1.0) <= 1e-6
    report.measurements.append(
        measurement("c_gamma", results["normalization"], value=c_gamma, expected=1.0 / (2.0 * math.pi))
    )

    pts = rng.uniform(-2.0, 2.0, size=(samples, group.n))
    pts = pts[group.gauge_norm(pts) > 1e-3]
    grid = Grid.around_ball(origin_ball(1.0), cells)
    fine = grid.refined()
    for n, abar in enumerate(_random_elliptic(3, rng)):
        values = gamma_values(abar, pts)
        homogeneity = _relative(gamma_values(abar, group.dilate(2.0, pts)) / values, np.full(values.shape, 0.25))
        symmetry = _relative(gamma_values(abar, group.inverse(pts)), values)
        bound = float(np.max(np.abs(values) * group.gauge_norm(pts) ** (group.Q - 2)))
        coarse = fd_residual(abar, grid)
        refined = fd_residual(abar, fine)
        factor = coarse / refined if refined > 0 else float("inf")
        checks = {
            "homogeneity": homogeneity <= 1e-12,
            "sign": bool(np.all(values <= 0)),
            "symmetry": symmetry <= 1e-12,
            "fd_residual": 3.0 <= factor <= 5.0,
        }
        for name, ok in checks.items():
            results[f"{name}|abar={n}"] = ok
        report.measurements.append(
            measurement(
                f"abar={n}",
                all(checks.values()),
                homogeneity=homogeneity,
                symmetry=symmetry,
                uniform_bound=bound,
                residual=coarse,
                residual_refined=refined,
                factor=factor,
            )
        )

    far = far_field_error(EllipticMatrix.identity(), cells)
    results["far_field"] = far <= 0.02
    report.measurements.append(measurement("far_field", results["far_field"], error=far))

    residuals = potential_residuals(EllipticMatrix.identity(), potential_cells)
    results["potential_residual"] = all(later < earlier for earlier, later in zip(residuals, residuals[1:]))
    report.measurements.append(
        measurement(
            "potential_residual",
            results["potential_residual"],
            **{f"cells_{n}": r for n, r in zip(potential_cells, residuals)},
        )
    )
    report.constant = c_gamma
    return _finish(report, results)


# ---------------------------------------------------------------- Dirichlet solver


def gamma_boundary_errors(cells: Sequence[int], pole=(0.0, 0.0, 1.0)) -> List[float]:
    """边界数据取 Γ(p₀⁻¹∘x) (p₀ 在球外) 时离散解与 Γ 的内部最大误差"""
    ball = origin_ball(1.0)
    identity = EllipticMatrix.identity()
    p0 = np.asarray(pole, dtype=float)
    errors = []
    for n in cells:
        grid = Grid.around_ball(ball, n)
        exact = SampledFunction(grid, gamma_values(identity, HEISENBERG.compose(-p0, grid.points)))
        h, _ = solve_dirichlet(DiscreteDirichletProblem(ball, identity, exact, grid=grid))
        interior = grid.ball_indices(ball)
        errors.append(float(np.max(np.abs(h.values.ravel()[interior] - exact.values.ravel()[interior]))))
    return errors


def solve_check(
    cells: int = 24,
    refinements: Sequence[int] = (24, 48),
    rng: Optional[np.random.Generator] = None,
) -> VerificationReport:
    """
    Dirichlet 求解器: 常数与仿射数据的复现, 极大值原理, 线性,
    比较原理, Dirichlet 原理以及 Γ 边界数据下误差随加密的下降
    """
    rng = rng or np.random.default_rng(current_settings().seed)
    cells = max(cells, MIN_CELLS_ACROSS)
    report = new_report("solve", cells=cells, refinements=list(refinements))
    results: Dict[str, bool] = {}
    ball = origin_ball(1.0)
    grid = Grid.around_ball(ball, cells)
    interior = grid.ball_indices(ball)
    tolerance = current_settings().solver_tolerance

    for n, abar in enumerate(_random_elliptic(1, rng)):
        constant = harmonic_replacement(polynomial(sp.Integer(5), "five"), ball, abar, grid)
        affine = harmonic_replacement(polynomial(X, "x"), ball, abar, grid)
        constant_error = float(np.max(np.abs(constant.values - 5.0)))
        affine_error = float(np.max(np.abs(affine.values - grid.points[..., 0])))
        ok = constant_error <= 5.0 * tolerance and affine_error <= tolerance
        results[f"reproduction|abar={n}"] = ok
        report.measurements.append(
            measurement(f"reproduction|abar={n}", ok, constant=constant_error, affine=affine_error)
        )

    identity = EllipticMatrix.identity()
    worst = 0.0
    for u in polynomial_corpus() + [gauge_bump(1.5)]:
        check = max_principle_check(harmonic_replacement(u, ball, identity, grid), ball, identity)
        worst = max(worst, check.violation)
        report.measurements.append(measurement(f"{u.name}|max_principle", check.passed, violation=check.violation))
    results["max_principle"] = worst <= 1e-6

    cubic = polynomial(X ** 3, "x_cubed")
    h1 = harmonic_replacement(cubic, ball, identity, grid)
    h2 = harmonic_replacement(polynomial(X * T - Y ** 2, "xt_minus_y2"), ball, identity, grid)
    combined = harmonic_replacement(polynomial(X ** 3 + X * T - Y ** 2, "sum"), ball, identity, grid)
    linearity = float(np.max(np.abs(combined.values - h1.values - h2.values)))
    results["linearity"] = linearity <= 1e-6 * max(float(np.max(np.abs(combined.values))), 1.0)
    report.measurements.append(measurement("linearity", results["linearity"], error=linearity))

    energy_h = discrete_energy(h1, identity)
    energy_u = discrete_energy(cubic.sample(grid), identity)
    results["dirichlet_principle"] = energy_h <= energy_u
    report.measurements.append(
        measurement("dirichlet_principle", results["dirichlet_principle"], harmonic=energy_h, data=energy_u)
    )

    # L̄h = g ≥ 0 且边界数据相同 ⇒ h 不超过无源解
    source = gauge_bump(0.6).sample(grid)
    forced, _ = solve_dirichlet(DiscreteDirichletProblem(ball, identity, cubic, rhs=source, grid=grid))
    difference = (h1.values - forced.values).ravel()[interior]
    gap = float(np.min(difference))
    results["comparison"] = gap >= -1e-6 * max(float(np.max(np.abs(difference))), 1e-12)
    report.measurements.append(measurement("comparison", results["comparison"], min_gap=gap))

    errors = gamma_boundary_errors(refinements)
    results["gamma_boundary"] = all(later < earlier for earlier, later in zip(errors, errors[1:]))
    report.measurements.append(
        measurement(
            "gamma_boundary", results["gamma_boundary"], **{f"cells_{n}": e for n, e in zip(refinements, errors)}
        )
    )
    report.constant = worst
    return _finish(report, results)
