from typing import Optional, Any


class BaseCarnotError(Exception):
    """自定义异常基类"""

    exit_code: int = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class DimensionMismatchError(BaseCarnotError):
    """点的维数与群不一致"""

    def __init__(self, expected: int, got: Any):
        super().__init__(f"维数不匹配: 期望 {expected}, 实际 {got}")


class DomainError(BaseCarnotError):
    """参数超出定义域"""

    def __init__(self, detail: str):
        super().__init__(f"定义域错误: {detail}")


class BallOutsideGridError(DomainError):
    """球不在网格盒子内"""

    def __init__(self, center: Any, radius: float):
        super().__init__(f"球 B({center}, {radius:g}) 不在网格盒子内")


class EmptyBallError(DomainError):
    """离散球内没有网格节点"""

    def __init__(self, radius: float):
        super().__init__(f"半径 {radius:g} 低于网格分辨率, 离散球为空")


class SingularityError(BaseCarnotError):
    """在奇点处求值"""

    def __init__(self, detail: str = "基本解在原点处奇异"):
        super().__init__(detail)


class DegenerateInputError(BaseCarnotError):
    """退化输入 (例如零函数导致分母为零)"""

    def __init__(self, detail: str = "退化输入: 分母为零"):
        super().__init__(detail)


class NonEllipticError(DomainError):
    """系数矩阵不满足椭圆性条件"""

    def __init__(self, detail: str):
        super().__init__(f"非椭圆矩阵: {detail}")


class ConvergenceError(BaseCarnotError):
    """迭代求解器未收敛"""

    def __init__(self, iterations: int, residual: float, diagnostics: Any = None):
        super().__init__(f"迭代 {iterations} 次后未收敛, 相对残差 {residual:.3e}")
        self.diagnostics = diagnostics


class ConfigError(BaseCarnotError):
    """配置文件或命令行参数错误"""

    def __init__(self, detail: str):
        super().__init__(f"配置错误: {detail}")


class ArtifactWriteError(BaseCarnotError):
    """报告或网格文件写入失败"""

    def __init__(self, detail: str = "报告写入失败"):
        super().__init__(detail)


class UnknownCheckError(ConfigError):
    """未知的检查编号"""

    def __init__(self, check_id: str):
        super().__init__(f"未知的检查 '{check_id}'")


class NotPositiveDefiniteError(ConvergenceError):
    """共轭梯度遇到非正曲率"""

    def __init__(self, iterations: int, curvature: float, diagnostics: Any = None):
        BaseCarnotError.__init__(self, f"刚度矩阵不是正定的: 第 {iterations} 次迭代曲率 pᵀAp = {curvature:.3e}")
        self.diagnostics = diagnostics
