from typing import List, Sequence
import sys

import structlog

from carnot_lab.config import RunConfig
from carnot_lab.core.corpus import corpus_by_name
from carnot_lab.core.grid import Grid
from carnot_lab.cli.dependencies import get_repository, get_verification_service
from carnot_lab.schemas.report import SuiteSummary
from carnot_lab.services.common import origin_ball
from carnot_lab.services.verification_service import summarize

logger = structlog.get_logger()


def _print_summary(summary: SuiteSummary) -> None:
    for check_id, status in summary.checks.items():
        print(f"{check_id}: {status}")
    for check_id, detail in summary.errors.items():
        print(f"{check_id}: error ({detail})", file=sys.stderr)


def run_checks(config: RunConfig, check_ids: Sequence[str]) -> int:
    """
    运行检查并写出报告

    Returns:
        int: 0 全部通过, 2 存在 inconclusive, 1 存在失败或错误
    """
    service = get_verification_service(config)
    summary, _ = service.run_suite(check_ids)
    _print_summary(summary)
    return summary.exit_code


def dump_corpus(config: RunConfig, name: str) -> int:
    """在覆盖 B(0, radius) 的网格上采样语料, 写出网格转储与中间切片"""
    repository = get_repository(config)
    grid = Grid.around_ball(origin_ball(config.radius), config.resolution)
    written: List[str] = []
    for u in corpus_by_name(name, config.radius):
        path = repository.save_grid(f"corpus_{name}_{u.name}", u.sample(grid))
        written.append(str(path))
        print(path)
    logger.info("语料已写出", corpus=name, members=len(written), resolution=config.resolution)
    return 0


def merge_reports(config: RunConfig) -> int:
    """合并输出目录中已有的报告为汇总"""
    repository = get_repository(config)
    reports = repository.load_all()
    summary = summarize(reports)
    if not reports:
        summary.errors["report"] = f"输出目录 '{config.output_dir}' 中没有报告"
    repository.save_summary(summary)
    _print_summary(summary)
    logger.info("报告已合并", reports=len(reports), failed=summary.failed, inconclusive=summary.inconclusive)
    return summary.exit_code
