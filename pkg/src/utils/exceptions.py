"""异常定义

所有异常都继承自 CrftiwError，并带有 stage 属性，CLI 据此输出带阶段标签的错误信息。
"""


class CrftiwError(Exception):
    """CRFTIW 流水线基础异常"""

    stage = "crftiw"

    def __init__(self, message: str = ""):
        super().__init__(message)
        self.message = message

    def __str__(self) -> str:
        return f"[{self.stage}] {self.message}"


# ---- wavelet ----

class NonDyadicLengthError(CrftiwError):
    """曲线长度不是 2 的幂"""
    stage = "wavelet"


class NonFiniteInputError(CrftiwError):
    """输入包含 NaN / inf"""
    stage = "wavelet"


class InconsistentPyramidError(CrftiwError):
    """系数个数与二进金字塔不一致"""
    stage = "wavelet"


class DegenerateScaleError(CrftiwError):
    """某个尺度的系数范数过小，无法取对数"""
    stage = "wavelet"

    def __init__(self, bands):
        self.bands = list(bands)
        super().__init__(f"退化尺度 {self.bands}：系数范数 <= 阈值")


class ZeroNormCurveError(CrftiwError):
    """零范数曲线，相对误差无定义"""
    stage = "wavelet"


# ---- sindex ----

class EmptyInputError(CrftiwError):
    stage = "sindex"


class EmptyNeighborhoodError(CrftiwError):
    """核权重之和下溢（评估点远离训练指标范围）"""
    stage = "sindex"


class DegenerateCovariatesError(CrftiwError):
    stage = "sindex"


class OptimizerFailureError(CrftiwError):
    stage = "sindex"


class NonPositiveEffectError(CrftiwError):
    stage = "sindex"


# ---- npmix ----

class GridMismatchError(CrftiwError):
    """评估点超出密度网格范围"""
    stage = "npmix"


class EmptyComponentError(CrftiwError):
    stage = "npmix"


class InvalidLError(CrftiwError):
    stage = "npmix"


class TooFewValuesError(CrftiwError):
    stage = "npmix"


# ---- simulate ----

class InvalidScenarioError(CrftiwError):
    stage = "simulate"


# ---- evaluate ----

class LengthMismatchError(CrftiwError):
    stage = "evaluate"


class EmptyClusterError(CrftiwError):
    stage = "evaluate"


# ---- cli ----

class EmptySeriesError(CrftiwError):
    stage = "cli"


class NonPositivePopulationError(CrftiwError):
    stage = "cli"


class ConfigError(CrftiwError):
    stage = "cli"
