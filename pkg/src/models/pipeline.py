"""流水线配置模型"""
from pathlib import Path
from typing import Any, Dict, Literal, Optional

from pydantic import BaseModel, Field, ValidationError, model_validator

from src.utils.config import Config
from src.utils.exceptions import ConfigError


class PipelineConfig(BaseModel):
    """一次完整聚类运行的配置"""
    curves_path: Path
    covariates_path: Optional[Path] = None
    labels_path: Optional[Path] = Field(default=None, description="真实标签，给定时计算 ARI")
    output_dir: Path = Field(default_factory=lambda: Config.OUTPUT_DIR)
    method: Literal["crftiw", "noTI", "noCov", "adjustFirst"] = "crftiw"
    wavelet: str = "sym8"
    bandwidth_constant: Optional[float] = Field(default=None, gt=0, description="覆盖单指标回归的 C")
    mixture_bandwidth_constant: Optional[float] = Field(default=None, gt=0)
    L: Optional[int] = Field(default=None, ge=1, description="固定成分数；None 时按肘部规则选择")
    l_min: int = Field(default=1, ge=1)
    l_max: int = Field(default=10, ge=1)
    tau: float = Field(default=15.0, gt=0)
    seed: int = 0
    truncate_to_dyadic: bool = False
    standardize_covariates: bool = Field(default=False, description="按列标准化协变量，记入 indexfit.yaml")
    leave_one_out: bool = False
    refits: bool = Field(default=False, description="同时输出每个系数置零的约束拟合")

    @model_validator(mode='after')
    def _check(self) -> 'PipelineConfig':
        if self.l_min > self.l_max:
            raise ValueError(f"L 范围为空: {self.l_min}..{self.l_max}")
        for path in (self.curves_path, self.covariates_path, self.labels_path):
            if path is not None and not Path(path).is_file():
                raise ValueError(f"文件不可读: {path}")
        if self.method != "noCov" and self.covariates_path is None:
            raise ValueError(f"方法 {self.method} 需要协变量文件")
        return self

    @classmethod
    def from_sources(cls, file_values: Optional[Dict[str, Any]] = None,
                     overrides: Optional[Dict[str, Any]] = None) -> 'PipelineConfig':
        """
        按优先级合并配置：命令行参数 > 配置文件 > config/defaults.yaml > 模型默认值

        Args:
            file_values: 扁平配置文件读出的键值（字符串）
            overrides: 命令行参数，值为 None 的项视为未给出
        """
        merged: Dict[str, Any] = {}
        wavelet = Config.section("wavelet")
        select_l = Config.section("select_l")
        if "name" in wavelet:
            merged["wavelet"] = wavelet["name"]
        if "tau" in select_l:
            merged["tau"] = select_l["tau"]
        if "l_max" in select_l:
            merged["l_max"] = select_l["l_max"]

        # 配置文件的键已统一为小写
        fields = {name.lower(): name for name in cls.model_fields}
        merged.update({fields[k.lower()]: v for k, v in (file_values or {}).items() if k.lower() in fields})
        merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
        try:
            return cls(**merged)
        except ValidationError as e:
            raise ConfigError(f"流水线配置无效: {e.errors()[0]['msg']}") from e
