"""
离散导数算子

所有算子按末尾轴约定工作：时空场的末四轴为 (t, x1, x2, x3)，前导轴（分量）原样保留。
x2、x3 周期；某方向网格数为 1 时该方向导数恒为零。

- SchemeDiff: 显式格式精确求逆的离散算子（前向时间差分减去 Rusanov 耗散）
- CentralDiff: 二阶中心差分，用于诊断与范数
- SpectralDiff: 全周期盒子上的 FFT 导数，用于恒等式检验
"""
from __future__ import annotations

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from core.eos_state import Grid

logger = logging.getLogger(__name__)

AXIS_T, AXIS_X1, AXIS_X2, AXIS_X3 = -4, -3, -2, -1


def _periodic_central(u: np.ndarray, dx: float, axis: int) -> np.ndarray:
    if u.shape[axis] == 1:
        return np.zeros_like(u)
    return (np.roll(u, -1, axis=axis) - np.roll(u, 1, axis=axis)) / (2.0 * dx)


def _periodic_second(u: np.ndarray, axis: int) -> np.ndarray:
    """δ²u = u_{i+1} − 2u_i + u_{i−1}（周期）"""
    if u.shape[axis] == 1:
        return np.zeros_like(u)
    return np.roll(u, -1, axis=axis) - 2.0 * u + np.roll(u, 1, axis=axis)


class _GridDiff:
    """基于 Grid 的差分算子公共部分"""

    edge_order = 1

    def __init__(self, grid: Grid):
        self.grid = grid

    def _as_volume(self, u: np.ndarray) -> Tuple[np.ndarray, bool]:
        """边界场 (..., nt, n2, n3) 嵌入为 (..., nt, 1, n2, n3)"""
        u = np.asarray(u, dtype=float)
        if u.ndim >= 4 and u.shape[-4:] == self.grid.shape:
            return u, False
        if u.ndim >= 3 and u.shape[-3:] == self.grid.boundary_shape:
            return np.expand_dims(u, AXIS_X1), True
        raise ValueError(f"场形状 {u.shape} 与网格不匹配")

    def x1(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.grid.periodic_x1:
            return _periodic_central(u, self.grid.dx1, AXIS_X1)
        if u.shape[AXIS_X1] < self.edge_order + 1:
            return np.zeros_like(u)
        return np.gradient(u, self.grid.dx1, axis=AXIS_X1, edge_order=self.edge_order)

    def x2(self, u: np.ndarray) -> np.ndarray:
        return _periodic_central(np.asarray(u, dtype=float), self.grid.dx2, AXIS_X2)

    def x3(self, u: np.ndarray) -> np.ndarray:
        return _periodic_central(np.asarray(u, dtype=float), self.grid.dx3, AXIS_X3)

    def tangential(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.x2(u), self.x3(u)

    def spatial(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.x1(u), self.x2(u), self.x3(u)

    def x(self, u: np.ndarray, j: int) -> np.ndarray:
        """第 j 个空间方向（1..3）"""
        return (self.x1, self.x2, self.x3)[j - 1](u)


class CentralDiff(_GridDiff):
    """二阶中心差分，x1 两端为二阶单侧差分"""

    edge_order = 2

    def t(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        order = 2 if u.shape[AXIS_T] >= 3 else 1
        return np.gradient(u, self.grid.dt, axis=AXIS_T, edge_order=order)

    def boundary_t(self, u: np.ndarray) -> np.ndarray:
        """边界场 (..., nt, n2, n3) 的时间导数"""
        u = np.asarray(u, dtype=float)
        order = 2 if u.shape[-3] >= 3 else 1
        return np.gradient(u, self.grid.dt, axis=-3, edge_order=order)


class SchemeDiff(_GridDiff):
    """
    显式 Rusanov 格式对应的离散算子

    t(u) = (u^{m+1} − u^m)/dt − Σ_j α_j/(2dx_j)·δ_j²u^m，最后一层用后向差分。
    x1 方向耗散只作用于内部节点；front=True 时去掉 x1 耗散，切向用 β_j。
    空间导数为中心差分，x1 两端一阶单侧。
    """

    edge_order = 1

    def __init__(self, grid: Grid, alpha: Sequence[float] = (0.0, 0.0, 0.0),
                 beta: Optional[Sequence[float]] = None):
        super().__init__(grid)
        self.alpha = tuple(float(a) for a in alpha)
        self.beta = tuple(float(b) for b in beta) if beta is not None else self.alpha

    def dissipation(self, u: np.ndarray, front: bool = False) -> np.ndarray:
        """Σ_j 速度_j/(2dx_j)·δ_j²u"""
        u = np.asarray(u, dtype=float)
        speeds = self.beta if front else self.alpha
        g = self.grid
        out = np.zeros_like(u)
        if not front and speeds[0] != 0.0 and u.shape[AXIS_X1] > 2:
            if g.periodic_x1:
                out += speeds[0] / (2.0 * g.dx1) * _periodic_second(u, AXIS_X1)
            else:
                inner = u[..., 2:, :, :] - 2.0 * u[..., 1:-1, :, :] + u[..., :-2, :, :]
                out[..., 1:-1, :, :] += speeds[0] / (2.0 * g.dx1) * inner
        for speed, dx, axis in ((speeds[1], g.dx2, AXIS_X2), (speeds[2], g.dx3, AXIS_X3)):
            if speed != 0.0:
                out += speed / (2.0 * dx) * _periodic_second(u, axis)
        return out

    def forward(self, u: np.ndarray) -> np.ndarray:
        """前向时间差分，最后一层为后向差分"""
        u = np.asarray(u, dtype=float)
        du = np.empty_like(u)
        du[..., :-1, :, :, :] = np.diff(u, axis=AXIS_T) / self.grid.dt
        du[..., -1, :, :, :] = du[..., -2, :, :, :]
        return du

    def t(self, u: np.ndarray, front: bool = False) -> np.ndarray:
        vol, embedded = self._as_volume(u)
        out = self.forward(vol) - self.dissipation(vol, front=front)
        return out[..., 0, :, :] if embedded else out

    def boundary_t(self, u: np.ndarray) -> np.ndarray:
        """边界场的前沿型时间算子"""
        return self.t(u, front=True)


class SpectralDiff:
    """全周期盒子上的 FFT 导数（时间方向亦视为周期）"""

    def __init__(self, dt: float, dx1: float, dx2: float, dx3: float):
        self.spacings = (float(dt), float(dx1), float(dx2), float(dx3))

    @classmethod
    def from_grid(cls, grid: Grid) -> "SpectralDiff":
        return cls(grid.dt, grid.dx1, grid.dx2, grid.dx3)

    def _derivative(self, u: np.ndarray, axis: int) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        n = u.shape[axis]
        if n == 1:
            return np.zeros_like(u)
        h = self.spacings[axis + 4]
        k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
        if n % 2 == 0:
            # Nyquist 模的导数取零
            k[n // 2] = 0.0
        shape = [1] * u.ndim
        shape[axis] = n
        spectrum = np.fft.fft(u, axis=axis) * (1j * k).reshape(shape)
        return np.real(np.fft.ifft(spectrum, axis=axis))

    def t(self, u: np.ndarray) -> np.ndarray:
        return self._derivative(u, AXIS_T)

    def x1(self, u: np.ndarray) -> np.ndarray:
        return self._derivative(u, AXIS_X1)

    def x2(self, u: np.ndarray) -> np.ndarray:
        return self._derivative(u, AXIS_X2)

    def x3(self, u: np.ndarray) -> np.ndarray:
        return self._derivative(u, AXIS_X3)

    def spatial(self, u: np.ndarray):
        return self.x1(u), self.x2(u), self.x3(u)
