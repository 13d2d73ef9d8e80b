from typing import List, Optional
import argparse
import logging
import sys

import structlog

from carnot_lab import __version__
from carnot_lab.cli.commands import dump_corpus, merge_reports, run_checks
from carnot_lab.cli.dependencies import build_run_config
from carnot_lab.config import settings
from carnot_lab.exceptions.custom_exceptions import BaseCarnotError, ConfigError
from carnot_lab.services.verification_service import CHECK_IDS

# 单项检查子命令与检查编号相同
DIRECT_CHECKS = ("group-check", "calculus-check", "maximal", "gamma-check", "solve")


def configure_logging(level: str = "INFO") -> None:
    """structlog 结构化日志, 经标准库输出到 stderr"""
    logging.basicConfig(stream=sys.stderr, level=level.upper(), format="%(message)s", force=True)
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer(ensure_ascii=False),
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


logger = structlog.get_logger()


class _Parser(argparse.ArgumentParser):
    """参数错误按配置错误处理 (退出码 1), 不使用 argparse 默认的 2"""

    def error(self, message):
        raise ConfigError(message)


def _common_options() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value 配置文件")
    common.add_argument("--resolution", type=int, help="每个球直径方向上的网格单元数")
    common.add_argument("--p", help="逗号分隔的 p 值")
    common.add_argument("--k", help="逗号分隔的 k 值")
    common.add_argument("--radius", type=float, help="球半径 r 或 R")
    common.add_argument("--alpha", type=float, help="Hölder 指数 α")
    common.add_argument("--amplitudes", help="逗号分隔的系数振幅")
    common.add_argument("--seed", type=int, help="随机种子")
    common.add_argument("--workers", type=int, help="并行检查数")
    common.add_argument("--output-dir", dest="output_dir", help="输出目录")
    common.add_argument("--tolerance", type=float, help="求解器相对残差阈值")
    common.add_argument("--max-iterations", dest="max_iterations", type=int, help="求解器迭代上限")
    common.add_argument("--lattice-stride", dest="lattice_stride", type=int, help="球格球心步长")
    common.add_argument("--lattice-ratio", dest="lattice_ratio", type=float, help="球格半径公比")
    common.add_argument("--log-level", dest="log_level", default=None, help="日志级别")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = _Parser(prog="carnot-lab", description="Heisenberg 群上的数值工具与估计验证")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name in DIRECT_CHECKS:
        sub.add_parser(name, parents=[common], help=f"运行 {name} 检查")

    verify = sub.add_parser("verify", parents=[common], help="运行一个或多个检查")
    verify.add_argument("checks", nargs="+", metavar="CHECK", help=f"检查编号或 all: {', '.join(CHECK_IDS)}")

    corpus = sub.add_parser("corpus", parents=[common], help="采样测试函数语料并写出网格")
    corpus.add_argument("name", nargs="?", default="default", help="default / harmonic / polynomial")

    sub.add_parser("report", parents=[common], help="合并输出目录中的报告")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    命令行入口

    Returns:
        int: 0 全部通过, 2 存在 inconclusive, 1 失败或配置错误
    """
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.log_level or settings.log_level)
        config = build_run_config(args)
        if args.command in DIRECT_CHECKS:
            return run_checks(config, [args.command])
        if args.command == "verify":
            return run_checks(config, args.checks)
        if args.command == "corpus":
            return dump_corpus(config, args.name)
        return merge_reports(config)
    except BaseCarnotError as e:
        logger.error("运行失败", exception=e.__class__.__name__, detail=e.detail)
        print(f"错误: {e.detail}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
