"""
周期正交 DWT 与平移不变 DWT (TIDWT)

约定：一次分析步 a'[m] = Σ_k h[k] a[(2m + k) mod N]（循环相关）。
TIDWT 第 j 层在同一约定下取消抽取、滤波器膨胀 2^(j-1) 倍，因此
DWT(S_h w) 在第 j 层的第 m 个系数恰好等于 θ_j[(2^j m + h) mod T]。
"""
import numpy as np

from src.models.curves import (
    Curve, CurveLike, DwtCoefficients, TidwtCoefficients, WaveletFilter, as_curve
)
from src.utils.exceptions import InconsistentPyramidError, ZeroNormCurveError


def circular_shift(curve: CurveLike, h: int) -> Curve:
    """(S_h w)(t) = w(t + h) mod T"""
    curve = as_curve(curve)
    return Curve(values=np.roll(curve.values, -int(h)), region=curve.region)


def _decimated_windows(a: np.ndarray, length: int) -> np.ndarray:
    """(N/2, L) 窗口矩阵，第 m 行为 a[(2m + k) mod N]"""
    N = a.size
    idx = (2 * np.arange(N // 2)[:, None] + np.arange(length)[None, :]) % N
    return a[idx]


def _dilated_windows(a: np.ndarray, length: int, step: int) -> np.ndarray:
    """(T, L) 窗口矩阵，第 p 行为 a[(p + step * k) mod T]"""
    T = a.size
    idx = (np.arange(T)[:, None] + step * np.arange(length)[None, :]) % T
    return a[idx]


def dwt_forward(curve: CurveLike, wavelet: WaveletFilter, levels: int = None) -> DwtCoefficients:
    """
    Mallat 金字塔，周期边界

    Args:
        curve: 长度 2^J 的曲线
        wavelet: 正交滤波器对
        levels: 分解层数，默认 J（分解到单个尺度系数）

    Returns:
        DwtCoefficients，细节系数从粗到细排列
    """
    curve = as_curve(curve)
    J = curve.check_dyadic()
    levels = J if levels is None else int(levels)
    if not 1 <= levels <= J:
        raise ValueError(f"分解层数 {levels} 必须在 1..{J} 之间")

    approx = curve.values
    details = []
    for _ in range(levels):
        windows = _decimated_windows(approx, wavelet.length)
        details.insert(0, windows @ wavelet.high)
        approx = windows @ wavelet.low
    return DwtCoefficients(scaling=approx, details=details)


def dwt_inverse(coeffs: DwtCoefficients, wavelet: WaveletFilter) -> Curve:
    """DWT 逆变换（分析算子的转置）"""
    approx = np.asarray(coeffs.scaling, dtype=float)
    size = approx.size
    if size < 1 or size & (size - 1):
        raise InconsistentPyramidError(f"尺度系数个数 {size} 不是 2 的幂")

    for detail in coeffs.details:
        M = approx.size
        if detail.size != M:
            raise InconsistentPyramidError(f"细节系数个数 {detail.size}，期望 {M}")
        N = 2 * M
        idx = (2 * np.arange(M)[:, None] + np.arange(wavelet.length)[None, :]) % N
        contrib = approx[:, None] * wavelet.low[None, :] + detail[:, None] * wavelet.high[None, :]
        out = np.zeros(N)
        np.add.at(out, idx, contrib)
        approx = out
    return Curve(values=approx)


def tidwt_forward(curve: CurveLike, wavelet: WaveletFilter) -> TidwtCoefficients:
    """
    平移不变 DWT：J 个细节带 + 1 个尺度带，每带长度 T，O(T log T)

    等价于对所有循环平移 S_h w 做 DWT 后逐尺度去重。
    """
    curve = as_curve(curve)
    J = curve.check_dyadic()

    approx = curve.values
    details = []
    for level in range(1, J + 1):
        windows = _dilated_windows(approx, wavelet.length, 2 ** (level - 1))
        details.append(windows @ wavelet.high)
        approx = windows @ wavelet.low
    return TidwtCoefficients(scaling=approx, details=details)


def tidwt_energy(coeffs: TidwtCoefficients) -> float:
    """加权能量 2^-J ||θ_0||² + Σ_j 2^-j ||θ_j||²"""
    J = coeffs.J
    energy = 2.0 ** (-J) * float(np.dot(coeffs.scaling, coeffs.scaling))
    for j, band in enumerate(coeffs.details, start=1):
        energy += 2.0 ** (-j) * float(np.dot(band, band))
    return energy


def parseval_check(curve: CurveLike, coeffs: TidwtCoefficients) -> float:
    """Parseval 恒等式的相对误差"""
    curve = as_curve(curve)
    norm2 = float(np.dot(curve.values, curve.values))
    if norm2 == 0.0:
        raise ZeroNormCurveError("零范数曲线无法计算相对误差")
    return abs(tidwt_energy(coeffs) - norm2) / norm2
