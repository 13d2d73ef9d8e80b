from pathlib import Path
from typing import Any, Dict, Optional

from carnot_lab.config import RunConfig, load_run_config
from carnot_lab.services.verification_service import VerificationService
from carnot_lab.storage.repository import ReportRepository

# 命令行参数名 -> RunConfig 字段
FLAG_FIELDS = {
    "resolution": "resolution",
    "p": "p_values",
    "k": "k_values",
    "radius": "radius",
    "alpha": "alpha",
    "amplitudes": "amplitudes",
    "seed": "seed",
    "workers": "workers",
    "output_dir": "output_dir",
    "tolerance": "solver_tolerance",
    "max_iterations": "solver_max_iterations",
    "lattice_stride": "lattice_stride",
    "lattice_ratio": "lattice_ratio",
}


def build_run_config(args) -> RunConfig:
    """配置文件 + 环境变量 + 命令行参数"""
    overrides: Dict[str, Any] = {field: getattr(args, flag, None) for flag, field in FLAG_FIELDS.items()}
    path: Optional[Path] = Path(args.config) if getattr(args, "config", None) else None
    return load_run_config(path, overrides)


def get_repository(config: RunConfig) -> ReportRepository:
    """获取报告仓储实例"""
    return ReportRepository(Path(config.output_dir))


def get_verification_service(config: RunConfig) -> VerificationService:
    """获取验证服务实例 (设置为全局 settings 按运行配置更新后的副本)"""
    return VerificationService(config, get_repository(config), config.library_settings())
