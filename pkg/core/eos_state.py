"""
状态方程与 MHD 状态 - 多方气体闭合、原始变量状态、网格与两相场容器
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple, Optional, Tuple

import numpy as np

from config.constants import (
    DEFAULT_ENTROPY_SCALE,
    DEFAULT_GAMMA,
    IDX_H,
    IDX_P,
    IDX_S,
    IDX_V,
    N_COMPONENTS,
)
from core.exceptions import DomainError, ParameterError

logger = logging.getLogger(__name__)


class EosValues(NamedTuple):
    """eos_eval 的返回值"""
    p: np.ndarray
    c2: np.ndarray
    e: np.ndarray
    theta: np.ndarray


@dataclass(frozen=True)
class Eos:
    """多方气体 p = exp(S/scale)·ρ^γ"""
    gamma: float = DEFAULT_GAMMA
    reference_entropy_scale: float = DEFAULT_ENTROPY_SCALE

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ParameterError(f"绝热指数必须大于 1，当前为: {self.gamma}")
        if not self.reference_entropy_scale > 0.0:
            raise ParameterError(f"熵尺度必须为正，当前为: {self.reference_entropy_scale}")

    def pressure(self, rho, S):
        return np.exp(np.asarray(S) / self.reference_entropy_scale) * np.asarray(rho) ** self.gamma

    def density(self, p, S):
        """由 (p, S) 反解密度"""
        p = np.asarray(p, dtype=float)
        if np.any(p <= 0):
            raise DomainError("压力必须为正", {"min_p": float(np.min(p))})
        return (p * np.exp(-np.asarray(S) / self.reference_entropy_scale)) ** (1.0 / self.gamma)

    def sound_speed_sq(self, rho, p):
        return self.gamma * np.asarray(p) / np.asarray(rho)

    def internal_energy(self, rho, p):
        return np.asarray(p) / ((self.gamma - 1.0) * np.asarray(rho))

    def pressure_entropy_derivative(self, p):
        """∂p/∂S（固定 ρ）"""
        return np.asarray(p) / self.reference_entropy_scale


def eos_eval(eos: Eos, rho, S) -> EosValues:
    """
    计算 (p, c², e, θ)

    Args:
        eos: 状态方程
        rho: 密度（标量或数组）
        S: 熵

    Returns:
        EosValues，其中 θ = ∂e/∂S（固定 ρ）
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise DomainError("密度必须为正", {"min_rho": float(np.min(rho))})
    p = eos.pressure(rho, S)
    e = eos.internal_energy(rho, p)
    return EosValues(p=p, c2=eos.sound_speed_sq(rho, p), e=e,
                     theta=e / eos.reference_entropy_scale)


class DerivedFields(NamedTuple):
    """原始变量的导出量"""
    rho: np.ndarray
    c2: np.ndarray
    e: np.ndarray
    theta: np.ndarray
    q: np.ndarray


def derived_fields(U: np.ndarray, eos: Eos) -> DerivedFields:
    """对形如 (8, ...) 的状态数组计算 ρ, c², e, θ, q"""
    U = np.asarray(U, dtype=float)
    rho = eos.density(U[IDX_P], U[IDX_S])
    values = eos_eval(eos, rho, U[IDX_S])
    q = U[IDX_P] + 0.5 * np.sum(U[IDX_H] ** 2, axis=0)
    return DerivedFields(rho=rho, c2=values.c2, e=values.e, theta=values.theta, q=q)


@dataclass(frozen=True)
class MhdState:
    """单点原始变量状态 U = (p, v, H, S)"""
    p: float
    v: Tuple[float, float, float]
    H: Tuple[float, float, float]
    S: float
    eos: Eos = field(default_factory=Eos)

    def __post_init__(self):
        if not self.p > 0:
            raise DomainError(f"压力必须为正，当前为: {self.p}")
        object.__setattr__(self, "v", tuple(float(x) for x in self.v))
        object.__setattr__(self, "H", tuple(float(x) for x in self.H))

    @classmethod
    def from_vector(cls, U, eos: Optional[Eos] = None) -> "MhdState":
        U = np.asarray(U, dtype=float).reshape(N_COMPONENTS)
        return cls(p=float(U[IDX_P]), v=tuple(U[IDX_V]), H=tuple(U[IDX_H]),
                   S=float(U[IDX_S]), eos=eos or Eos())

    def as_vector(self) -> np.ndarray:
        return np.array([self.p, *self.v, *self.H, self.S], dtype=float)

    @property
    def rho(self) -> float:
        return float(self.eos.density(self.p, self.S))

    @property
    def c2(self) -> float:
        return float(self.eos.sound_speed_sq(self.rho, self.p))

    @property
    def c(self) -> float:
        return math.sqrt(self.c2)

    @property
    def e(self) -> float:
        return float(self.eos.internal_energy(self.rho, self.p))

    @property
    def q(self) -> float:
        """总压 p + |H|²/2"""
        return self.p + 0.5 * sum(h * h for h in self.H)

    @property
    def sonic_bound(self) -> float:
        """c²/(ρc² + |H|²)"""
        rho, c2 = self.rho, self.c2
        return c2 / (rho * c2 + sum(h * h for h in self.H))


@dataclass(frozen=True)
class Grid:
    """
    计算区域 [0,T] × [0,x1_max] × T_{L2} × T_{L3} 的离散

    x1 节点 i·dx1 (i = 0..n1)，x2、x3 周期；n3 = 1 表示与 x3 无关。
    periodic_x1 仅用于全周期盒子上的检验。
    """
    n1: int
    n2: int
    n3: int
    x1_max: float
    L2: float
    L3: float
    T: float
    nt: int
    periodic_x1: bool = False

    def __post_init__(self):
        for name in ("n1", "n2", "n3"):
            if getattr(self, name) < 1:
                raise ParameterError(f"网格数 {name} 必须 ≥ 1")
        if self.nt < 2:
            raise ParameterError("时间层数必须 ≥ 2")
        for name in ("x1_max", "L2", "L3", "T"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} 必须为正")

    @property
    def dx1(self) -> float:
        if self.periodic_x1:
            return self.x1_max / (self.n1 + 1)
        return self.x1_max / self.n1

    @property
    def dx2(self) -> float:
        return self.L2 / self.n2

    @property
    def dx3(self) -> float:
        return self.L3 / self.n3

    @property
    def dt(self) -> float:
        return self.T / (self.nt - 1)

    @property
    def spacings(self) -> Tuple[float, float, float]:
        return self.dx1, self.dx2, self.dx3

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        """标量时空场形状 (nt, n1+1, n2, n3)"""
        return self.nt, self.n1 + 1, self.n2, self.n3

    @property
    def boundary_shape(self) -> Tuple[int, int, int]:
        return self.nt, self.n2, self.n3

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.nt) * self.dt

    @property
    def x1(self) -> np.ndarray:
        return np.arange(self.n1 + 1) * self.dx1

    @property
    def x2(self) -> np.ndarray:
        return np.arange(self.n2) * self.dx2

    @property
    def x3(self) -> np.ndarray:
        return np.arange(self.n3) * self.dx3

    def mesh(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """可广播的坐标数组 (t, x1, x2, x3)"""
        return (self.t[:, None, None, None], self.x1[None, :, None, None],
                self.x2[None, None, :, None], self.x3[None, None, None, :])

    def zeros(self, components: Optional[int] = N_COMPONENTS) -> np.ndarray:
        if components is None:
            return np.zeros(self.shape)
        return np.zeros((components,) + self.shape)

    def with_time(self, T: float, nt: int) -> "Grid":
        return Grid(self.n1, self.n2, self.n3, self.x1_max, self.L2, self.L3,
                    T, nt, self.periodic_x1)

    def courant(self, speeds: Tuple[float, float, float]) -> float:
        """dt·Σ α_j/dx_j"""
        total = sum(a / dx for a, dx, n in zip(speeds, self.spacings, (2, self.n2, self.n3))
                    if n > 1)
        return self.dt * total

    @classmethod
    def from_cfl(cls, n1: int, n2: int, n3: int, x1_max: float, L2: float, L3: float,
                 T: float, speeds: Tuple[float, float, float], cfl: float,
                 periodic_x1: bool = False) -> "Grid":
        """按 CFL 条件 dt·Σ α_j/dx_j ≤ cfl 选取时间层数"""
        space = cls(n1, n2, n3, x1_max, L2, L3, T, 2, periodic_x1)
        rate = space.courant(speeds) / space.dt
        if not rate > 0:
            return space
        nt = int(math.ceil(T * rate / cfl)) + 1
        grid = space.with_time(T, max(nt, 2))
        logger.debug(f"CFL 选取时间层数: nt={grid.nt}, dt={grid.dt:.3e}, 库朗数={grid.courant(speeds):.3f}")
        return grid


@dataclass
class TwoPhaseField:
    """
    正负两相共享同一网格的时空场

    plus/minus 形如 (..., nt, n1+1, n2, n3)；vanishing_past 标记 t ≤ 0 时为零。
    """
    plus: np.ndarray
    minus: np.ndarray
    grid: Grid
    vanishing_past: bool = False

    def __post_init__(self):
        self.plus = np.asarray(self.plus, dtype=float)
        self.minus = np.asarray(self.minus, dtype=float)
        if self.plus.shape != self.minus.shape:
            raise ParameterError("两相场形状不一致",
                                 {"plus": self.plus.shape, "minus": self.minus.shape})
        if self.plus.shape[-4:] != self.grid.shape:
            raise ParameterError("场形状与网格不匹配",
                                 {"field": self.plus.shape, "grid": self.grid.shape})

    @classmethod
    def zeros(cls, grid: Grid, components: Optional[int] = N_COMPONENTS,
              vanishing_past: bool = True) -> "TwoPhaseField":
        return cls(grid.zeros(components), grid.zeros(components), grid, vanishing_past)

    def phases(self) -> Iterator[Tuple[int, np.ndarray]]:
        """依次给出 (+1, plus)、(-1, minus)"""
        yield 1, self.plus
        yield -1, self.minus

    def __getitem__(self, sign: int) -> np.ndarray:
        return self.plus if sign > 0 else self.minus

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "TwoPhaseField":
        return TwoPhaseField(fn(self.plus), fn(self.minus), self.grid, self.vanishing_past)

    def combine(self, other: "TwoPhaseField", fn) -> "TwoPhaseField":
        return TwoPhaseField(fn(self.plus, other.plus), fn(self.minus, other.minus), self.grid,
                             self.vanishing_past and other.vanishing_past)

    def __add__(self, other: "TwoPhaseField") -> "TwoPhaseField":
        return self.combine(other, np.add)

    def __sub__(self, other: "TwoPhaseField") -> "TwoPhaseField":
        return self.combine(other, np.subtract)

    def scale(self, factor: float) -> "TwoPhaseField":
        return self.map(lambda a: factor * a)

    def boundary(self) -> Tuple[np.ndarray, np.ndarray]:
        """x1 = 0 上的迹"""
        return self.plus[..., :, 0, :, :], self.minus[..., :, 0, :, :]

    def past_violation(self) -> float:
        """t = 0 层的最大绝对值"""
        return float(max(np.max(np.abs(self.plus[..., 0, :, :, :]), initial=0.0),
                         np.max(np.abs(self.minus[..., 0, :, :, :]), initial=0.0)))

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.plus)), np.max(np.abs(self.minus))))


class ConservationDiagnostics(NamedTuple):
    """守恒型与拟线性型残差的比较"""
    conservative: np.ndarray
    quasilinear: np.ndarray
    discrepancy: np.ndarray
    max_discrepancy: float


def state_from_conserved_checks(U: np.ndarray, grid: Grid, eos: Eos, diff=None) -> ConservationDiagnostics:
    """
    在给定光滑场上同时计算守恒型残差与拟线性型残差并比较

    守恒变量 (ρ, ρv, H, ρ(e + |v|²/2) + |H|²/2)。拟线性残差 Q = B0∂tU + Σ B_j∂_jU
    经链式法则映射到守恒残差，其与直接计算的守恒残差之差即为离散差异。

    Args:
        U: 形如 (8, nt, n1+1, n2, n3) 的原始变量场
        grid: 网格
        eos: 状态方程
        diff: 差分算子，默认二阶中心差分

    Returns:
        ConservationDiagnostics
    """
    from core.differences import CentralDiff
    from core.mhd_system import primitive_matrices, apply_matrix

    diff = diff or CentralDiff(grid)
    U = np.asarray(U, dtype=float)
    d = derived_fields(U, eos)
    rho, v, H, p = d.rho, U[IDX_V], U[IDX_H], U[IDX_P]
    q = d.q
    vH = np.sum(v * H, axis=0)
    energy = rho * (d.e + 0.5 * np.sum(v ** 2, axis=0)) + 0.5 * np.sum(H ** 2, axis=0)

    def div(flux):
        # flux[j] 为第 j 个方向的通量
        return diff.x1(flux[0]) + diff.x2(flux[1]) + diff.x3(flux[2])

    R = np.empty_like(U)
    R[0] = diff.t(rho) + div(rho * v)
    for i in range(3):
        mom_flux = rho * v[i] * v - H[i] * H
        mom_flux[i] = mom_flux[i] + q
        R[1 + i] = diff.t(rho * v[i]) + div(mom_flux)
    for i in range(3):
        R[4 + i] = diff.t(H[i]) + div(v * H[i] - H * v[i])
    R[7] = diff.t(energy) + div((energy + q) * v - vH * H)

    B0, B1, B2, B3 = primitive_matrices(U, eos)
    Q = (apply_matrix(B0, diff.t(U)) + apply_matrix(B1, diff.x1(U))
         + apply_matrix(B2, diff.x2(U)) + apply_matrix(B3, diff.x3(U)))

    div_H = div(H)
    Q_v, Q_H, Q_S = Q[1:4], Q[4:7], Q[7]
    p_S = eos.pressure_entropy_derivative(p)
    R_rho = rho * Q[0] - p_S / d.c2 * Q_S
    predicted = np.empty_like(U)
    predicted[0] = R_rho
    predicted[1:4] = v * R_rho + Q_v - H * div_H
    predicted[4:7] = Q_H - v * div_H
    E_spec = d.e + 0.5 * np.sum(v ** 2, axis=0)
    predicted[7] = ((E_spec + p / rho) * R_rho + rho * d.theta * Q_S
                    + np.sum(v * Q_v, axis=0) + np.sum(H * Q_H, axis=0) - vH * div_H)

    discrepancy = R - predicted
    max_disc = float(np.max(np.abs(discrepancy)))
    logger.debug(f"守恒型/拟线性型差异: {max_disc:.3e}")
    return ConservationDiagnostics(conservative=R, quasilinear=Q, discrepancy=discrepancy,
                                   max_discrepancy=max_disc)
