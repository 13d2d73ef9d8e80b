from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import time

import numpy as np
import structlog

from carnot_lab.config import RunConfig, Settings, use_settings
from carnot_lab.core.corpus import default_corpus
from carnot_lab.core.model import CoefficientField, EllipticMatrix
from carnot_lab.exceptions.custom_exceptions import BaseCarnotError, UnknownCheckError
from carnot_lab.schemas.report import SuiteSummary, VerificationReport
from carnot_lab.services import foundations, inequalities, lemmas, theorems
from carnot_lab.storage.repository import ReportRepository

logger = structlog.get_logger()

CHECK_IDS: Tuple[str, ...] = (
    "group-check",
    "calculus-check",
    "maximal",
    "gamma-check",
    "solve",
    "poincare",
    "interpolation",
    "lemma1",
    "lemma2",
    "bb1",
    "lemma3",
    "thm36",
    "main",
)


class VerificationService:
    """估计检查的注册表与调度"""

    def __init__(
        self,
        config: RunConfig,
        repository: Optional[ReportRepository] = None,
        settings: Optional[Settings] = None,
    ):
        self.config = config
        self.repository = repository
        # 检查在 use_settings 作用域内运行, 全局 settings 不被改写
        self.settings = settings or config.library_settings()
        self._registry: Dict[str, Callable[[], VerificationReport]] = {
            "group-check": self._group_check,
            "calculus-check": self._calculus_check,
            "maximal": self._maximal,
            "gamma-check": self._gamma_check,
            "solve": self._solve,
            "poincare": self._poincare,
            "interpolation": self._interpolation,
            "lemma1": self._lemma1,
            "lemma2": self._lemma2,
            "bb1": self._bb1,
            "lemma3": self._lemma3,
            "thm36": self._thm36,
            "main": self._main,
        }

    @staticmethod
    def available_checks() -> List[str]:
        return list(CHECK_IDS)

    def resolve(self, requested: Sequence[str]) -> List[str]:
        """
        展开 "all" 并去重, 保持注册顺序

        Raises:
            UnknownCheckError: 未知的检查编号
        """
        wanted = set()
        for check_id in requested:
            if check_id == "all":
                wanted.update(CHECK_IDS)
            elif check_id in self._registry:
                wanted.add(check_id)
            else:
                raise UnknownCheckError(check_id)
        return [c for c in CHECK_IDS if c in wanted]

    # 每个检查使用独立的、由种子确定的随机数发生器, 与执行顺序无关
    def _rng(self) -> np.random.Generator:
        return np.random.default_rng(self.config.seed)

    @property
    def _cells(self) -> int:
        return self.config.resolution

    @property
    def _p(self) -> float:
        """单个 p 的检查使用的指数: 列表中有 2 时取 2"""
        return 2.0 if 2.0 in self.config.p_values else self.config.p_values[0]

    def _abar(self) -> EllipticMatrix:
        return EllipticMatrix.random(0.5, self._rng())

    def _coefficients(self) -> CoefficientField:
        return CoefficientField.loglog_vmo(max(self.config.amplitudes))

    def _group_check(self) -> VerificationReport:
        return foundations.group_check(rng=self._rng())

    def _calculus_check(self) -> VerificationReport:
        return foundations.calculus_check(rng=self._rng())

    def _maximal(self) -> VerificationReport:
        return foundations.maximal_check(
            p_values=self.config.p_values, stride=self.config.lattice_stride, rng=self._rng()
        )

    def _gamma_check(self) -> VerificationReport:
        return foundations.gamma_check(cells=self._cells, rng=self._rng())

    def _solve(self) -> VerificationReport:
        return foundations.solve_check(cells=self._cells, rng=self._rng())

    def _poincare(self) -> VerificationReport:
        return inequalities.poincare_report(
            default_corpus(self.config.radius), self.config.p_values, self._cells, self.config.radius
        )

    def _interpolation(self) -> VerificationReport:
        return inequalities.verify_interpolation(default_corpus(self.config.radius), self.config.p_values, cells=self._cells)

    def _lemma1(self) -> VerificationReport:
        Lambda = min(self.settings.poincare_lambdas)
        abars = [EllipticMatrix.identity(), self._abar()]
        return lemmas.verify_lemma1(abars, lemmas.lemma_polynomials(), Lambda, cells=self._cells)

    def _lemma2(self) -> VerificationReport:
        return lemmas.verify_lemma2(
            self._abar(),
            k_values=self.config.k_values,
            r=self.config.radius,
            cells=self._cells,
            tolerance=self.config.solver_tolerance,
            Lambda=min(self.settings.poincare_lambdas),
        )

    def _bb1(self) -> VerificationReport:
        return lemmas.verify_lemma_bb1(self._abar(), self._p, r=self.config.radius, cells=self._cells)

    def _lemma3(self) -> VerificationReport:
        return lemmas.verify_lemma3(
            self._abar(),
            default_corpus(1.0),
            self._p,
            k_values=self.config.k_values,
            cells=self._cells,
            tolerance=self.config.solver_tolerance,
        )

    def _thm36(self) -> VerificationReport:
        return theorems.verify_thm36(
            self._coefficients(),
            default_corpus(self.config.radius),
            self._p,
            R=self.config.radius,
            alpha=self.config.alpha,
            cells=self._cells,
            tolerance=self.config.solver_tolerance,
            rng=self._rng(),
        )

    def _main(self) -> VerificationReport:
        return theorems.verify_main(
            self._coefficients(),
            p_values=self.config.p_values,
            R=self.config.radius,
            cells=self._cells,
            amplitudes=self.config.amplitudes,
            alpha=self.config.alpha,
        )

    def run_check(self, check_id: str) -> VerificationReport:
        """
        运行单个检查并 (若配置了仓储) 保存报告

        Raises:
            UnknownCheckError: 未知的检查编号
            BaseCarnotError: 检查内部的数值错误
        """
        if check_id not in self._registry:
            raise UnknownCheckError(check_id)
        logger.info("检查开始", check=check_id, resolution=self._cells, seed=self.config.seed)
        start = time.perf_counter()
        with use_settings(self.settings):
            report = self._registry[check_id]()
        elapsed = time.perf_counter() - start
        report.timing = {"seconds": round(elapsed, 3)}
        logger.info(
            "检查结束",
            check=check_id,
            status=report.status,
            constant=report.constant,
            seconds=round(elapsed, 3),
        )
        if self.repository is not None:
            self.repository.save_report(report)
        return report

    def run_suite(self, requested: Sequence[str]) -> Tuple[SuiteSummary, Dict[str, VerificationReport]]:
        """
        并行运行一组检查

        单个检查的 BaseCarnotError 记入汇总的 errors, 不中断其余检查;
        汇总按注册顺序排列, 与完成顺序无关。
        """
        check_ids = self.resolve(requested)
        workers = max(1, min(self.config.workers, len(check_ids)))

        def guarded(check_id: str):
            try:
                return self.run_check(check_id), None
            except BaseCarnotError as e:
                logger.error("检查出错", check=check_id, exception=e.__class__.__name__, detail=e.detail)
                return None, e.detail

        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(guarded, check_ids))

        summary = SuiteSummary()
        reports: Dict[str, VerificationReport] = {}
        for check_id, (report, error) in zip(check_ids, outcomes):
            if report is None:
                summary.errors[check_id] = error
                continue
            reports[check_id] = report
            summary.checks[check_id] = report.status
            if report.status == "fail":
                summary.failed.append(check_id)
            elif report.status == "inconclusive":
                summary.inconclusive.append(check_id)

        if self.repository is not None:
            self.repository.save_summary(summary)
        logger.info(
            "检查汇总",
            checks=len(check_ids),
            failed=summary.failed,
            inconclusive=summary.inconclusive,
            errors=sorted(summary.errors),
        )
        return summary, reports


def summarize(reports: Dict[str, VerificationReport]) -> SuiteSummary:
    """由已保存的报告重建汇总"""
    summary = SuiteSummary()
    for check_id in sorted(reports, key=lambda c: (CHECK_IDS.index(c) if c in CHECK_IDS else len(CHECK_IDS), c)):
        status = reports[check_id].status
        summary.checks[check_id] = status
        if status == "fail":
            summary.failed.append(check_id)
        elif status == "inconclusive":
            summary.inconclusive.append(check_id)
    return summary
