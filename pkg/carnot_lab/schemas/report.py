from pydantic import BaseModel, Field
from typing import Optional, Dict, List, Any, Literal


SCHEMA_VERSION = 1

CheckStatus = Literal["pass", "fail", "inconclusive"]


class Measurement(BaseModel):
    """单个函数/参数组合的测量结果"""

    label: str = Field(..., description="测量对象 (语料成员, k, ε 等)")
    values: Dict[str, float] = Field(default_factory=dict, description="测得的量")
    passed: Optional[bool] = Field(None, description="该项是否满足判据")


class SolveDiagnostics(BaseModel):
    """Dirichlet 求解诊断信息"""

    iterations: int = Field(..., ge=0, description="迭代次数")
    residual: float = Field(..., description="最终相对残差")
    energy: float = Field(..., description="离散能量")
    unknowns: int = Field(0, ge=0, description="内部节点数")
    converged: bool = Field(True, description="是否收敛")


class MaxPrincipleReport(BaseModel):
    """极大值原理检查结果"""

    boundary_min: float
    boundary_max: float
    interior_min: float
    interior_max: float
    violation: float = Field(..., ge=0, description="最坏违背量")
    passed: bool


class PoincareEstimate(BaseModel):
    """Poincaré 不等式的经验常数"""

    Lambda: float = Field(..., gt=1, description="膨胀因子 Λ")
    c: float = Field(..., ge=0, description="常数 c")
    p: float = Field(..., ge=1, description="指数 p")
    per_lambda: Dict[str, float] = Field(default_factory=dict, description="每个 Λ 的 c")


class VerificationReport(BaseModel):
    """一次估计检查的完整记录"""

    schema_version: int = Field(SCHEMA_VERSION, alias="schema", description="报告格式版本")
    check: str = Field(..., description="检查编号")
    params: Dict[str, Any] = Field(default_factory=dict, description="参数")
    measurements: List[Measurement] = Field(default_factory=list)
    slope: Optional[float] = Field(None, description="对数拟合斜率")
    intercept: Optional[float] = Field(None, description="对数拟合截距")
    r2: Optional[float] = Field(None, description="拟合优度")
    constant: Optional[float] = Field(None, description="经验常数")
    status: CheckStatus = Field("pass", description="pass / fail / inconclusive")
    notes: List[str] = Field(default_factory=list, description="约束违背与数值说明")
    tables: Dict[str, List[Dict[str, float]]] = Field(default_factory=dict, description="绘图用的表格, 每行一个字典")
    timing: Dict[str, float] = Field(default_factory=dict, description="运行时间 (不参与比较)")

    model_config = {"populate_by_name": True}

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def stable_json(self) -> str:
        """不含计时信息的 JSON, 相同配置与种子下逐字节一致"""
        return self.model_dump_json(by_alias=True, exclude={"timing"}, indent=2)


class SuiteSummary(BaseModel):
    """多项检查的汇总"""

    schema_version: int = Field(SCHEMA_VERSION, alias="schema")
    checks: Dict[str, CheckStatus] = Field(default_factory=dict)
    failed: List[str] = Field(default_factory=list)
    inconclusive: List[str] = Field(default_factory=list)
    errors: Dict[str, str] = Field(default_factory=dict)

    model_config = {"populate_by_name": True}

    @property
    def exit_code(self) -> int:
        if self.failed or self.errors:
            return 1
        if self.inconclusive:
            return 2
        return 0
