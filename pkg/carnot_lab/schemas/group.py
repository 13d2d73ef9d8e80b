from pydantic import BaseModel, Field, field_validator, model_validator
from typing import List


class GroupDescriptor(BaseModel):
    """群的静态描述 (可序列化为 key=value 文本)"""

    name: str = Field(..., description="群名称", examples=["heisenberg"])
    n: int = Field(..., ge=1, description="环境维数")
    q: int = Field(..., ge=1, description="生成元个数")
    s: int = Field(..., ge=1, description="步数")
    alpha: List[int] = Field(..., description="伸缩指数")
    gauge_constant: float = Field(..., gt=0, description="齐次范数中的常数")

    @field_validator("alpha", mode="before")
    @classmethod
    def parse_alpha(cls, v):
        if isinstance(v, str):
            return [int(a) for a in v.replace("(", "").replace(")", "").split(",") if a.strip()]
        return v

    @model_validator(mode="after")
    def validate_structure(self):
        if len(self.alpha) != self.n:
            raise ValueError("alpha 的长度必须等于 n")
        if any(a < 1 for a in self.alpha):
            raise ValueError("伸缩指数必须是正整数")
        if any(b < a for a, b in zip(self.alpha, self.alpha[1:])):
            raise ValueError("伸缩指数必须非递减")
        if any(a != 1 for a in self.alpha[: self.q]):
            raise ValueError("生成元必须是 1-齐次的")
        if self.q > self.n:
            raise ValueError("生成元个数不能超过维数")
        return self

    @property
    def homogeneous_dimension(self) -> int:
        return sum(self.alpha)

    def to_text(self) -> str:
        """序列化为 key=value 文本"""
        alpha = ",".join(str(a) for a in self.alpha)
        return (
            f"name={self.name}\nn={self.n}\nq={self.q}\ns={self.s}\n"
            f"alpha={alpha}\ngauge_constant={self.gauge_constant!r}\n"
        )

    @classmethod
    def from_text(cls, text: str) -> "GroupDescriptor":
        """从 key=value 文本解析"""
        values = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                key, value = line.split("=", 1)
                values[key.strip()] = value.strip()
        return cls(**values)
