from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Optional, List, Dict, Any, Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from pathlib import Path
import os

from carnot_lab.exceptions.custom_exceptions import ConfigError


class Settings(BaseSettings):
    """库级默认配置"""

    # 应用基本配置
    app_name: str = Field(default="Carnot Lab", description="应用名称")
    app_version: str = Field(default="1.0.0", description="应用版本")
    log_level: str = Field(default="INFO", description="日志级别")

    # 群结构
    gauge_constant: float = Field(default=16.0, description="Korányi 范数中 t 项的常数")

    # Dirichlet 求解器
    solver_tolerance: float = Field(default=1e-8, description="相对残差停止阈值")
    solver_max_iterations: int = Field(default=10_000, description="共轭梯度最大迭代次数")
    cells_per_ball: int = Field(default=32, description="每个球直径方向上的网格单元数")
    zoom_factor: float = Field(default=2.0, description="嵌套调和延拓的逐级缩小倍数")

    # 球格 (极大函数)
    lattice_ratio: float = Field(default=1.25, description="半径几何序列的公比")
    lattice_min_cells: float = Field(default=2.0, description="最小半径 (以网格步长计)")
    lattice_stride: int = Field(default=2, description="球心网格的步长 (节点数)")

    # 区域链 Ω_m = B(0, R0 (1 + growth m)), ε_m = R0 margin
    chain_base_radius: float = Field(default=1.0, description="区域链基础半径 R0")
    chain_growth: float = Field(default=0.1, description="区域链半径增长率")
    chain_margin: float = Field(default=1.0 / 40.0, description="ε_m 与 R0 的比值")

    # 估计检查
    fefferman_stein_gamma: float = Field(default=2.0, description="Fefferman-Stein 膨胀因子 γ")
    poincare_lambdas: List[float] = Field(default=[1.5, 2.0, 3.0, 4.0], description="Λ 搜索网格")
    poincare_c_max: float = Field(default=10.0, description="Poincaré 常数的可接受上界")
    slope_r2_min: float = Field(default=0.9, description="斜率拟合所需的最小 R²")
    default_p_values: List[float] = Field(default=[1.5, 2.0, 3.0], description="默认 p 值")
    default_alpha: float = Field(default=2.0, description="Hölder 指数 α (β = α/(α-1))")

    # 运行
    workers: int = Field(default=1, description="并行检查的工作线程数")
    seed: int = Field(default=0, description="随机种子")
    output_dir: str = Field(default="reports", description="输出目录")

    model_config = SettingsConfigDict(
        env_prefix="CARNOT_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


# 全局设置实例
settings = Settings()

_active_settings: ContextVar[Optional[Settings]] = ContextVar("carnot_settings", default=None)


def current_settings() -> Settings:
    """当前生效的设置: use_settings 作用域内为其副本, 否则为全局 settings"""
    scoped = _active_settings.get()
    return settings if scoped is None else scoped


@contextmanager
def use_settings(scoped: Settings) -> Iterator[Settings]:
    """
    在当前上下文 (线程) 内以 scoped 代替全局 settings

    全局 settings 本身不被修改, 退出作用域后恢复原先的设置。
    """
    token = _active_settings.set(scoped)
    try:
        yield scoped
    finally:
        _active_settings.reset(token)


# RunConfig 中覆盖库级默认值的字段
LIBRARY_OVERRIDES = (
    "solver_tolerance",
    "solver_max_iterations",
    "lattice_stride",
    "lattice_ratio",
    "seed",
    "workers",
    "output_dir",
)


def _split_list(value: Any) -> Any:
    """把逗号分隔的字符串拆成列表"""
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class RunConfig(BaseModel):
    """一次命令行运行的配置 (未知键被拒绝)"""

    group: str = Field(default="heisenberg", description="群名称")
    resolution: int = Field(default=32, ge=8, le=512, description="每个检查的网格分辨率")
    p_values: List[float] = Field(default_factory=lambda: list(settings.default_p_values))
    k_values: List[int] = Field(default_factory=lambda: [8, 16, 32, 64])
    radius: float = Field(default=1.0, gt=0, description="球半径 r 或 R")
    alpha: float = Field(default_factory=lambda: settings.default_alpha, gt=1)
    amplitudes: List[float] = Field(default_factory=lambda: [0.1, 0.2, 0.4])
    lattice_stride: int = Field(default_factory=lambda: settings.lattice_stride, ge=1)
    lattice_ratio: float = Field(default_factory=lambda: settings.lattice_ratio, gt=1)
    solver_tolerance: float = Field(default_factory=lambda: settings.solver_tolerance, gt=0)
    solver_max_iterations: int = Field(default_factory=lambda: settings.solver_max_iterations, ge=1)
    output_dir: str = Field(default_factory=lambda: settings.output_dir)
    seed: int = Field(default_factory=lambda: settings.seed)
    workers: int = Field(default_factory=lambda: settings.workers, ge=1, le=64)

    model_config = ConfigDict(extra="forbid", frozen=True)

    @field_validator("p_values", "k_values", "amplitudes", mode="before")
    @classmethod
    def split_comma_lists(cls, v):
        return _split_list(v)

    @field_validator("p_values")
    @classmethod
    def validate_p_values(cls, v):
        if not v:
            raise ValueError("p 列表不能为空")
        if any(p < 1 for p in v):
            raise ValueError("p 必须 ≥ 1")
        return v

    @field_validator("k_values")
    @classmethod
    def validate_k_values(cls, v):
        if any(k < 2 for k in v):
            raise ValueError("k 必须 ≥ 2")
        return sorted(v)

    @model_validator(mode="after")
    def validate_group(self):
        if self.group.lower() not in {"heisenberg", "h1"}:
            raise ValueError(f"不支持的群: {self.group}")
        return self

    def library_settings(self, base: Optional[Settings] = None) -> Settings:
        """以本次运行的覆盖项更新后的设置副本 (base 默认为全局 settings)"""
        return (base or settings).model_copy(
            update={field: getattr(self, field) for field in LIBRARY_OVERRIDES}
        )


def parse_config_file(path: Path) -> Dict[str, str]:
    """
    解析扁平的 key=value 配置文件

    Args:
        path: 配置文件路径

    Returns:
        Dict: 键值对 (值保持字符串, 由 RunConfig 做类型转换)

    Raises:
        ConfigError: 文件不存在或行格式错误
    """
    if not path.exists():
        raise ConfigError(f"配置文件 '{path}' 不存在")

    values: Dict[str, str] = {}
    for number, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: 缺少 '='")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise ConfigError(f"{path}:{number}: 键为空")
        values[key] = value.strip()
    return values


def load_run_config(
    path: Optional[Path] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """
    构建运行配置: 文件 < 环境变量 CARNOT_OUTPUT_DIR < 命令行参数

    Raises:
        ConfigError: 任何解析或校验失败
    """
    values: Dict[str, Any] = parse_config_file(path) if path else {}

    env_output = os.environ.get("CARNOT_OUTPUT_DIR")
    if env_output:
        values["output_dir"] = env_output

    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value

    try:
        return RunConfig(**values)
    except ValueError as e:
        raise ConfigError(str(e))
