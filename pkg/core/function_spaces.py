"""
函数空间 - σ 权、各向异性加权范数、光滑算子族与边界数据提升

范数中的导数一律用二阶中心差分（CentralDiff），x1 方向梯形求积，
切向为周期矩形求积，时间方向梯形求积。
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from config.constants import CUTOFF_WIDTH_MAX
from core.differences import CentralDiff
from core.eos_state import Grid
from core.exceptions import DomainError, ParameterError, ResolutionError

logger = logging.getLogger(__name__)


# ===== 截断函数 =====

def smooth_step(r):
    """五次光滑阶跃：r ≤ 0 为 0，r ≥ 1 为 1，C²"""
    r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
    return r ** 3 * (10.0 - 15.0 * r + 6.0 * r ** 2)


def spectral_cutoff(r):
    """频域截断 χ(r)：r ≤ 0.5 为 1，r ≥ 1 为 0"""
    return 1.0 - smooth_step(2.0 * np.asarray(r, dtype=float) - 1.0)


def cutoff_width(grid: Grid) -> float:
    return min(CUTOFF_WIDTH_MAX, 0.5 * grid.x1_max)


def x1_cutoff(x1, width: float = CUTOFF_WIDTH_MAX):
    """x1 方向截断：χ(0) = 1，x1 ≥ width 时为 0"""
    return 1.0 - smooth_step(np.asarray(x1, dtype=float) / width)


# ===== σ 权 =====

@dataclass(frozen=True)
class SigmaWeight:
    """
    σ(x1)：[0,1] 上为 x1，[2,∞) 上为 2

    (1,2) 上取 t = x1 − 1 的五次混合 1 + t + 4t³ − 7t⁴ + 3t⁵，
    两端值、一阶与二阶导数都连续，导数 (1−t)²(1+2t+15t²) ≥ 0。
    """
    c3: float = 4.0
    c4: float = -7.0
    c5: float = 3.0

    def __call__(self, x1):
        x1 = np.asarray(x1, dtype=float)
        if np.any(x1 < 0):
            raise DomainError("σ 的自变量必须非负", {"min_x1": float(np.min(x1))})
        t = np.clip(x1 - 1.0, 0.0, 1.0)
        blend = 1.0 + t + self.c3 * t ** 3 + self.c4 * t ** 4 + self.c5 * t ** 5
        out = np.where(x1 <= 1.0, x1, np.where(x1 >= 2.0, 2.0, blend))
        return out if out.ndim else float(out)

    def derivative(self, x1):
        x1 = np.asarray(x1, dtype=float)
        t = np.clip(x1 - 1.0, 0.0, 1.0)
        blend = 1.0 + 3 * self.c3 * t ** 2 + 4 * self.c4 * t ** 3 + 5 * self.c5 * t ** 4
        out = np.where(x1 <= 1.0, 1.0, np.where(x1 >= 2.0, 0.0, blend))
        return out if out.ndim else float(out)


sigma = SigmaWeight()


# ===== 各向异性范数 =====

def resolution_cap(grid: Grid) -> int:
    """网格可支持的最高范数阶数"""
    return max(2, min(grid.n1 + 1, grid.n2) // 4)


def _time_weights(grid: Grid, nt: int) -> np.ndarray:
    w = np.full(nt, grid.dt)
    if nt > 1:
        w[0] = w[-1] = 0.5 * grid.dt
    return w


def _x1_weights(grid: Grid) -> np.ndarray:
    w = np.full(grid.n1 + 1, grid.dx1)
    if not grid.periodic_x1:
        w[0] = w[-1] = 0.5 * grid.dx1
    return w


class AnisotropicNorm:
    """
    离散 B^s_μ 范数

    ‖u(t)‖²_{s,μ} = Σ_{|α|+2k≤s} μ^{2(s−|α|−2k)} ‖e^{−μt}M^α∂1^k u(t)‖²，
    M = (σ∂1, ∂2, ∂3)。μ = 0 时各项权为 1，即 ‖·‖_{s,T}。
    前导轴（分量）一并求和。
    """

    def __init__(self, grid: Grid, s: int = 0, mu: float = 1.0,
                 tangential_only: bool = False, diff: Optional[CentralDiff] = None):
        if mu < 0:
            raise ParameterError(f"μ 必须非负，当前为: {mu}")
        self.grid = grid
        self.s = int(s)
        self.mu = float(mu)
        self.tangential_only = tangential_only
        self.diff = diff or CentralDiff(grid)
        self._sigma = sigma(grid.x1)[:, None, None]
        self._wx1 = _x1_weights(grid)[:, None, None]

    @property
    def s_max(self) -> int:
        return resolution_cap(self.grid)

    def _check_order(self, s: int) -> None:
        if s > self.s_max:
            raise ResolutionError(f"范数阶数 {s} 超出网格分辨率",
                                  {"s_max": self.s_max, "n1": self.grid.n1, "n2": self.grid.n2})

    def _space_integral(self, f: np.ndarray) -> np.ndarray:
        """∫ f² dx，返回每个时间层的值 (nt,)"""
        g = self.grid
        dens = np.sum(f ** 2 * self._wx1, axis=(-3, -2, -1)) * g.dx2 * g.dx3
        if dens.ndim > 1:
            dens = dens.reshape(-1, dens.shape[-1]).sum(axis=0)
        return dens

    def order_integrals(self, u: np.ndarray, s_top: int) -> Dict[int, np.ndarray]:
        """按 |α|+2k 分组的 ‖M^α∂1^k u(t)‖²（未加权）"""
        self._check_order(s_top)
        d = self.diff
        g = self.grid
        u = np.asarray(u, dtype=float)
        nt = u.shape[-4]
        integrals = {order: np.zeros(nt) for order in range(s_top + 1)}

        base = u
        for k in range(s_top // 2 + 1):
            if k > 0:
                if self.tangential_only:
                    break
                base = d.x1(base)
            budget = s_top - 2 * k
            row = base
            for a2 in range(budget + 1 if g.n2 > 1 else 1):
                if a2 > 0:
                    row = d.x2(row)
                col = row
                for a3 in range(budget - a2 + 1 if g.n3 > 1 else 1):
                    if a3 > 0:
                        col = d.x3(col)
                    m = col
                    for a1 in range(budget - a2 - a3 + 1):
                        if a1 > 0:
                            m = self._sigma * d.x1(m)
                        integrals[a1 + a2 + a3 + 2 * k] += self._space_integral(m)
        return integrals

    def _weighted(self, integrals: Dict[int, np.ndarray], s: int) -> np.ndarray:
        nt = len(next(iter(integrals.values())))
        total = np.zeros(nt)
        for order, values in integrals.items():
            if order > s:
                continue
            weight = 1.0 if self.mu == 0.0 else self.mu ** (2 * (s - order))
            total += weight * values
        t = np.arange(nt) * self.grid.dt
        return total * np.exp(-2.0 * self.mu * t)

    def norms(self, u: np.ndarray, s_list: Iterable[int]) -> Dict[int, float]:
        """一次计算多个阶数的时空范数"""
        s_list = sorted(set(int(s) for s in s_list))
        integrals = self.order_integrals(u, s_list[-1])
        nt = np.asarray(u).shape[-4]
        wt = _time_weights(self.grid, nt)
        return {s: float(math.sqrt(max(np.sum(wt * self._weighted(integrals, s)), 0.0)))
                for s in s_list}

    def per_slice(self, u: np.ndarray, s: Optional[int] = None) -> np.ndarray:
        """每个时间层的 ‖u(t)‖_{s,μ}"""
        s = self.s if s is None else s
        integrals = self.order_integrals(u, s)
        return np.sqrt(np.maximum(self._weighted(integrals, s), 0.0))

    def __call__(self, u: np.ndarray) -> float:
        return self.norms(u, [self.s])[self.s]


def norm_Bs(u: np.ndarray, grid: Grid, s: int, mu: float = 1.0, T: Optional[float] = None) -> float:
    """
    ‖u‖_{s,μ,T}

    T 小于网格终止时间时只积分到 T 对应的时间层。
    """
    norm = AnisotropicNorm(grid, s, mu)
    u = np.asarray(u, dtype=float)
    if T is not None and T < grid.T:
        m = int(round(T / grid.dt)) + 1
        u = u[..., :m, :, :, :]
    return norm(u)


def boundary_norm(b: np.ndarray, grid: Grid, s: int, mu: float = 1.0) -> float:
    """
    边界场 (..., nt, n2, n3) 的 H^s_μ 范数

    Σ_{|β|≤s} μ^{2(s−|β|)} ‖e^{−μt}∂^β b‖²，β 为 (x2, x3) 方向的切向导数。
    """
    diff = CentralDiff(grid)
    b = np.asarray(b, dtype=float)
    nt = b.shape[-3]
    t = np.arange(nt) * grid.dt
    wt = _time_weights(grid, nt) * np.exp(-2.0 * mu * t)
    total = 0.0
    row = b
    for a2 in range(s + 1 if grid.n2 > 1 else 1):
        if a2 > 0:
            row = diff.x2(row)
        col = row
        for a3 in range(s - a2 + 1 if grid.n3 > 1 else 1):
            if a3 > 0:
                col = diff.x3(col)
            weight = 1.0 if mu == 0.0 else mu ** (2 * (s - a2 - a3))
            dens = np.sum(col ** 2, axis=(-2, -1)) * grid.dx2 * grid.dx3
            if dens.ndim > 1:
                dens = dens.reshape(-1, nt).sum(axis=0)
            total += weight * float(np.sum(wt * dens))
    return math.sqrt(total)


def boundary_norms(b: np.ndarray, grid: Grid, s_list: Iterable[int], mu: float = 1.0) -> Dict[int, float]:
    return {int(s): boundary_norm(b, grid, int(s), mu) for s in s_list}


# ===== 光滑算子族 =====

def theta_schedule(theta0: float, n: int) -> Tuple[float, float]:
    """
    θ_n = sqrt(θ0² + n)，Δ_n = θ_{n+1} − θ_n

    Δ_n 按 1/(θ_{n+1} + θ_n) 计算，避免相近数相减。
    """
    if theta0 < 1.0:
        raise ParameterError(f"θ0 必须 ≥ 1，当前为: {theta0}")
    if n < 0:
        raise ParameterError(f"迭代序号必须非负，当前为: {n}")
    theta_n = math.sqrt(theta0 ** 2 + n)
    theta_next = math.sqrt(theta0 ** 2 + n + 1)
    return theta_n, 1.0 / (theta_next + theta_n)


class Smoother:
    """
    光滑算子 S_θ（逐时间层，只作用于空间）

    切向：(x2, x3) 上的离散 Fourier 低通，滤波因子 χ(|k|/θ)；
    法向：x1_max 处常数延拓、x1 = 0 处偶延拓后的低通，滤波因子 χ(|ξ|/θ²)。
    sharp=True 时两者改为截断指示函数。
    """

    def __init__(self, grid: Grid, sharp: bool = False, pad_factor: float = 1.0):
        self.grid = grid
        self.sharp = sharp
        self.n_pad = max(1, int(round(pad_factor * (grid.n1 + 1))))
        g = grid
        k2 = 2.0 * np.pi * np.fft.fftfreq(g.n2, d=g.dx2)
        k3 = 2.0 * np.pi * np.fft.fftfreq(g.n3, d=g.dx3)
        self._k_tan = np.sqrt(k2[:, None] ** 2 + k3[None, :] ** 2)
        m_even = 2 * (g.n1 + 1 + self.n_pad) - 2
        m_odd = 2 * (g.n1 + 1 + self.n_pad)
        self._xi_even = np.abs(2.0 * np.pi * np.fft.fftfreq(m_even, d=g.dx1))
        self._xi_odd = np.abs(2.0 * np.pi * np.fft.fftfreq(m_odd, d=g.dx1))

    def _window(self, r: np.ndarray) -> np.ndarray:
        if self.sharp:
            return (r < 1.0).astype(float)
        return spectral_cutoff(r)

    def tangential(self, u: np.ndarray, theta: float) -> np.ndarray:
        """(x2, x3) 低通，对任意前导轴成立"""
        u = np.asarray(u, dtype=float)
        filt = self._window(self._k_tan / theta)
        spectrum = np.fft.fft2(u, axes=(-2, -1)) * filt
        return np.real(np.fft.ifft2(spectrum, axes=(-2, -1)))

    def _normal(self, u: np.ndarray, theta: float, odd: bool) -> np.ndarray:
        g = self.grid
        if g.periodic_x1:
            xi = np.abs(2.0 * np.pi * np.fft.fftfreq(g.n1 + 1, d=g.dx1))
            filt = self._window(xi / theta ** 2)[:, None, None]
            return np.real(np.fft.ifft(np.fft.fft(u, axis=-3) * filt, axis=-3))
        n = g.n1 + 1
        pad = np.repeat(u[..., -1:, :, :], self.n_pad, axis=-3)
        w = np.concatenate([u, pad], axis=-3)
        if odd:
            zero = np.zeros_like(w[..., :1, :, :])
            ext = np.concatenate([w, zero, -w[..., :0:-1, :, :]], axis=-3)
            xi = self._xi_odd
        else:
            ext = np.concatenate([w, w[..., -2:0:-1, :, :]], axis=-3)
            xi = self._xi_even
        filt = self._window(xi / theta ** 2)[:, None, None]
        out = np.real(np.fft.ifft(np.fft.fft(ext, axis=-3) * filt, axis=-3))[..., :n, :, :]
        if odd:
            out[..., 0, :, :] = 0.0
        return out

    def apply(self, u: np.ndarray, theta: float) -> np.ndarray:
        """S_θ u"""
        if theta < 1.0:
            raise ParameterError(f"θ 必须 ≥ 1，当前为: {theta}")
        return self._normal(self.tangential(u, theta), theta, odd=False)

    def apply_trace_preserving(self, u: np.ndarray, theta: float) -> np.ndarray:
        """
        S^tr_θ u = χ·S_tan(u|₀) + S_odd(u − χ·u|₀)

        迹为 S_tan(u|₀)，两相迹相同的场光滑后迹仍相同。
        """
        u = np.asarray(u, dtype=float)
        chi = x1_cutoff(self.grid.x1, cutoff_width(self.grid))[:, None, None]
        trace = u[..., 0:1, :, :]
        rest = u - chi * trace
        smooth_rest = self._normal(self.tangential(rest, theta), theta, odd=True)
        return chi * self.tangential(trace, theta) + smooth_rest

    def apply_boundary(self, b: np.ndarray, theta: float) -> np.ndarray:
        """边界场只做切向光滑"""
        return self.tangential(b, theta)


def smooth_apply(u: np.ndarray, theta: float, grid: Grid, sharp: bool = False) -> np.ndarray:
    return Smoother(grid, sharp=sharp).apply(u, theta)


@dataclass
class SmootherFamily:
    """θ 参数化的光滑算子族及其 θ_n 调度"""
    grid: Grid
    theta0: float
    sharp: bool = False

    def __post_init__(self):
        if self.theta0 < 1.0:
            raise ParameterError(f"θ0 必须 ≥ 1，当前为: {self.theta0}")
        self.smoother = Smoother(self.grid, sharp=self.sharp)

    def theta(self, n: int) -> float:
        return theta_schedule(self.theta0, n)[0]

    def delta(self, n: int) -> float:
        return theta_schedule(self.theta0, n)[1]

    def S(self, u: np.ndarray, n: int) -> np.ndarray:
        return self.smoother.apply(u, self.theta(n))

    def S_trace(self, u: np.ndarray, n: int) -> np.ndarray:
        return self.smoother.apply_trace_preserving(u, self.theta(n))

    def S_boundary(self, b: np.ndarray, n: int) -> np.ndarray:
        return self.smoother.apply_boundary(b, self.theta(n))


# ===== 边界数据提升 =====

class LiftResult(NamedTuple):
    field: np.ndarray
    trace_gap: float
    norm_ratio: float


def lift_boundary_data(v: np.ndarray, grid: Grid, order: int = 0, mu: float = 1.0) -> LiftResult:
    """
    u(x1, ·) = v(·)·χ(x1)，χ(0) = 1，x1 ≥ 1 时为 0

    Returns:
        LiftResult：提升场、迹误差与 ‖u‖_{order+1}/‖v‖_{H^order}（v ≡ 0 时为 0）
    """
    v = np.asarray(v, dtype=float)
    chi = x1_cutoff(grid.x1, cutoff_width(grid))[:, None, None]
    u = np.expand_dims(v, -3) * chi
    gap = float(np.max(np.abs(u[..., 0, :, :] - v))) if v.size else 0.0
    denom = boundary_norm(v, grid, order, mu)
    ratio = norm_Bs(u, grid, order + 1, mu) / denom if denom > 0 else 0.0
    return LiftResult(field=u, trace_gap=gap, norm_ratio=ratio)


# ===== 光滑常数测量 =====

STRUCTURED_AMPLITUDE = 0.3        # x1 结构场 1 + a·exp(−x1²/2w²) 的 |a| 上限
STRUCTURED_STRIDE = 4             # 频带内每隔几个模加一个 x1 结构场
TRACE_THETA_MIN = 4.0             # 迹常数只在 θ ≥ 4 上测量
TRACE_LAYERS = (2.0, 4.0)         # 随 θ 伸缩的边界层宽度 c/θ²
TRACE_WIDTHS = (0.25, 0.5, 1.0)   # 与 θ 无关的边界层宽度
TRACE_WAVENUMBERS = (0.25, 0.5, 1.0, 1.5, 2.0)


def harness_grid(n2: int = 2048, n1: int = 16) -> Grid:
    """常数测量用网格：切向周期 8π，使波数以 1/4 为步长取值；x1 ∈ [0, 8]"""
    return Grid(n1=n1, n2=n2, n3=1, x1_max=8.0, L2=8.0 * np.pi, L3=2.0 * np.pi, T=0.1, nt=2)


def layer_grid(theta: float, n1: int = 64, n2: int = 512) -> Grid:
    """
    迹常数测量用的伸缩网格

    x1_max = 24/θ²，切向周期 64π/θ：宽度 c/θ² 的边界层与波数 jθ/32 在每个 θ 上
    落在同一组网格点上。
    """
    return Grid(n1=n1, n2=n2, n3=1, x1_max=24.0 / theta ** 2, L2=64.0 * np.pi / theta,
                L3=2.0 * np.pi, T=0.1, nt=2)


class SmoothingConstants(NamedTuple):
    """每个 (类别, s, α) 的测量常数随 θ 的变化；迹类别对应 trace_thetas"""
    thetas: Tuple[float, ...]
    constants: Dict[Tuple[str, int, int], List[float]]
    trace_thetas: Tuple[float, ...] = ()

    def drift(self, key: Tuple[str, int, int]) -> float:
        values = [c for c in self.constants[key] if c > 0]
        if not values:
            return 1.0
        return max(values) / min(values)

    def max_drift(self, kind: Optional[str] = None) -> float:
        keys = [k for k in self.constants if kind is None or k[0] == kind]
        return max((self.drift(key) for key in keys), default=1.0)


def _record_interior(best: Dict[Tuple[str, int, int], float], smoother: Smoother, norm: AnisotropicNorm,
                     u: np.ndarray, theta: float, orders: Sequence[int]) -> None:
    h = 1e-3 * theta
    su = smoother.apply(u, theta)
    dsu = (smoother.apply(u, theta + h) - smoother.apply(u, theta - h)) / (2.0 * h)
    u_n = norm.norms(u, orders)
    s_n = norm.norms(su, orders)
    r_n = norm.norms(u - su, orders)
    d_n = norm.norms(dsu, orders)
    for a in orders:
        for s in orders:
            cands = {
                ("low", s, a): s_n[s] / (theta ** max(s - a, 0) * u_n[a]),
                ("deriv", s, a): d_n[s] / (theta ** (s - a - 1) * u_n[a]),
            }
            if s <= a:
                cands[("high", s, a)] = r_n[s] / (theta ** (s - a) * u_n[a])
            for key, value in cands.items():
                best[key] = max(best.get(key, 0.0), value)


def _random_pair(rng: np.random.Generator, grid: Grid, profile: np.ndarray,
                 k: float) -> Tuple[np.ndarray, np.ndarray]:
    """u⁻ 为随机背景，u⁺ − u⁻ = a·cos(k x2 + φ)·profile(x1)"""
    x1 = grid.x1[None, :, None, None]
    x2 = grid.x2[None, None, :, None]
    unit = 2.0 * np.pi / grid.L2
    background = (rng.normal() * np.cos(int(rng.integers(1, 4)) * unit * x2 + rng.uniform(0.0, 2.0 * np.pi))
                  * np.exp(-x1 / grid.x1_max))
    minus = np.broadcast_to(background, grid.shape).copy()
    jump = rng.uniform(0.5, 1.0) * np.cos(k * x2 + rng.uniform(0.0, 2.0 * np.pi)) * profile
    return minus + jump, minus


def _record_trace(best: Dict[Tuple[str, int, int], float], grid: Grid, smoother: Smoother,
                  norm: AnisotropicNorm, pair: Tuple[np.ndarray, np.ndarray], theta: float,
                  orders: Sequence[int], mu: float) -> None:
    """
    ‖(S_θu⁺ − S_θu⁻)|_{x1=0}‖_{H^s} / (θ^{(s+1−α)+}‖u⁺ − u⁻‖_α)

    (s, α) = (0, 1) 不计：B¹ 不含法向导数，迹不受其控制。
    """
    plus, minus = pair
    jump = smoother.apply(plus, theta)[..., 0, :, :] - smoother.apply(minus, theta)[..., 0, :, :]
    lhs = boundary_norms(jump, grid, orders, mu)
    rhs = norm.norms(plus - minus, orders)
    for a in orders:
        for s in orders:
            if (s, a) == (0, 1):
                continue
            key = ("trace", s, a)
            best[key] = max(best.get(key, 0.0), lhs[s] / (theta ** max(s + 1 - a, 0) * rhs[a]))


def measure_smoothing_constants(grid: Optional[Grid] = None,
                                thetas: Sequence[float] = (2, 4, 8, 16, 32),
                                max_order: int = 4, mu: float = 1.0,
                                seed: int = 0) -> SmoothingConstants:
    """
    测量光滑性质中的常数

    对每个 θ 在 |k| ∈ [0.4θ, 1.6θ] 的切向模与最低模上取上确界。试探场为 x1 方向平坦的单模，
    以及频带内每隔 STRUCTURED_STRIDE 个模一个带随机 x1 结构的场：
      "low":   ‖S_θu‖_s / (θ^{(s−α)+}‖u‖_α)
      "high":  ‖(I−S_θ)u‖_s / (θ^{s−α}‖u‖_α)，仅 s ≤ α
      "deriv": ‖dS_θu/dθ‖_s / (θ^{s−α−1}‖u‖_α)，θ 导数用中心差分
    θ ≥ TRACE_THETA_MIN 时另在随机对 (u⁺, u⁻) 上测量
      "trace": ‖(S_θu⁺ − S_θu⁻)|_{x1=0}‖_{H^s} / (θ^{(s+1−α)+}‖u⁺ − u⁻‖_α)
    差场为宽度 c/θ²（layer_grid 上）或固定宽度（细 x1 网格上）的高斯边界层。
    θ = 2 时最优边界层已越过 σ 的过渡区 [1, 2]，不计入迹常数。
    """
    grid = grid or harness_grid()
    rng = np.random.default_rng(seed)
    smoother = Smoother(grid)
    norm = AnisotropicNorm(grid, 0, mu)
    orders = list(range(max_order + 1))
    x1 = grid.x1[None, :, None, None]
    x2 = grid.x2[None, None, :, None]
    unit = 2.0 * np.pi / grid.L2
    nyquist = grid.n2 // 2
    bump = np.exp(-0.5 * (x1 / (0.25 * grid.x1_max)) ** 2)

    fixed_grid = harness_grid(n2=128, n1=256)
    fixed_smoother = Smoother(fixed_grid)
    fixed_norm = AnisotropicNorm(fixed_grid, 0, mu)

    constants: Dict[Tuple[str, int, int], List[float]] = {}
    trace_thetas = []
    for theta in thetas:
        lo = max(1, int(math.floor(0.4 * theta / unit)))
        hi = min(nyquist - 1, int(math.ceil(1.6 * theta / unit)))
        modes = sorted({1, *range(lo, hi + 1)})
        best: Dict[Tuple[str, int, int], float] = {}
        structured = 0
        for m in modes:
            wave = np.cos(m * unit * x2)
            _record_interior(best, smoother, norm, np.broadcast_to(wave, grid.shape).copy(), theta, orders)
            if m == 1 or (m - lo) % STRUCTURED_STRIDE == 0:
                a = rng.uniform(-STRUCTURED_AMPLITUDE, STRUCTURED_AMPLITUDE)
                shifted = np.cos(m * unit * x2 + rng.uniform(0.0, 2.0 * np.pi))
                u = np.broadcast_to(shifted * (1.0 + a * bump), grid.shape).copy()
                _record_interior(best, smoother, norm, u, theta, orders)
                structured += 1

        if theta >= TRACE_THETA_MIN:
            lgrid = layer_grid(theta)
            lsmoother = Smoother(lgrid)
            lnorm = AnisotropicNorm(lgrid, 0, mu)
            for c in TRACE_LAYERS:
                profile = np.exp(-0.5 * (lgrid.x1 / (c / theta ** 2)) ** 2)[None, :, None, None]
                for j in range(2, 32, 2):
                    pair = _random_pair(rng, lgrid, profile, j * theta / 32.0)
                    _record_trace(best, lgrid, lsmoother, lnorm, pair, theta, orders, mu)
            for width in TRACE_WIDTHS:
                profile = np.exp(-0.5 * (fixed_grid.x1 / width) ** 2)[None, :, None, None]
                for k in TRACE_WAVENUMBERS:
                    pair = _random_pair(rng, fixed_grid, profile, k)
                    _record_trace(best, fixed_grid, fixed_smoother, fixed_norm, pair, theta, orders, mu)
            trace_thetas.append(float(theta))

        for key, value in best.items():
            constants.setdefault(key, []).append(value)
        logger.debug(f"光滑常数测量 θ={theta}: {len(modes)} 个模，其中 {structured} 个带 x1 结构")
    return SmoothingConstants(thetas=tuple(float(t) for t in thetas), constants=constants,
                              trace_thetas=tuple(trace_thetas))
