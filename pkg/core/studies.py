"""
线性研究 - 构造解加密、能量常数、∇·H 输运、离散稳定性、线性化恒等式与平面保持

这些研究都建立在平面电流-涡面背景上，供 `linear` 与 `check` 子命令调用。
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.constants import (
    DEFAULT_BACKGROUND_MINUS,
    DEFAULT_BACKGROUND_PLUS,
    DEFAULT_CFL,
    DEFAULT_TOL_PARALLEL,
    IDX_H,
    TWO_PI,
)
from core.differences import CentralDiff, SchemeDiff, SpectralDiff
from core.eos_state import Eos, Grid, TwoPhaseField
from core.function_spaces import AnisotropicNorm
from core.geometry_transform import (
    SIGNS,
    boundary_residual,
    cfl_rate,
    front_from_lifts,
    lift_front,
    make_scheme_diffs,
    phase_speeds,
    planar_front,
    scheme_speeds,
)
from core.linearized_solver import (
    EnergyReport,
    GoodUnknownFrame,
    LinearizationCheck,
    energy_report,
    evolve_nonlinear,
    linearization_check,
    solve_linearized,
)
from core.mhd_system import apply_matrix, lambda_fields

logger = logging.getLogger(__name__)

REFINEMENT_LEVELS = (16, 32, 64)
ENERGY_MU = (4.0, 8.0, 16.0)
LINEARIZATION_STEPS = (0.08, 0.04, 0.02, 0.01)

# 构造解的 x1 包络；N = 16 时每个宽度约 2.7 个网格点，边界处取值 e^{-2}
MANUFACTURED_CENTER = 1.0
MANUFACTURED_WIDTH = 0.5

# 构造解在两相上的分量方向
_MANUFACTURED_DIRECTIONS = {
    1: np.array([1.0, 0.5, -0.3, 0.2, 0.4, -0.2, 0.1, 0.3]),
    -1: np.array([-0.6, 0.3, 0.4, -0.1, 0.2, 0.5, -0.3, 0.2]),
}


def refinement_orders(errors: Sequence[float]) -> List[float]:
    """相邻加密层（网格尺度减半）的收敛阶 log2(e_k/e_{k+1})，首项为 nan"""
    orders = [math.nan]
    for coarse, fine in zip(errors[:-1], errors[1:]):
        if coarse > 0 and fine > 0:
            orders.append(math.log2(coarse / fine))
        else:
            orders.append(math.nan)
    return orders


def background_field(grid: Grid, plus: Sequence[float] = DEFAULT_BACKGROUND_PLUS,
                     minus: Sequence[float] = DEFAULT_BACKGROUND_MINUS) -> TwoPhaseField:
    """两相常数背景态"""
    shape = (8,) + grid.shape
    return TwoPhaseField(np.broadcast_to(np.asarray(plus, dtype=float)[:, None, None, None, None], shape).copy(),
                         np.broadcast_to(np.asarray(minus, dtype=float)[:, None, None, None, None], shape).copy(),
                         grid)


def planar_frame(n1: int, n2: int, T: float, eos: Eos, n3: int = 1, x1_max: float = 3.0,
                 cfl: float = DEFAULT_CFL, plus: Sequence[float] = DEFAULT_BACKGROUND_PLUS,
                 minus: Sequence[float] = DEFAULT_BACKGROUND_MINUS,
                 tol_parallel: float = DEFAULT_TOL_PARALLEL) -> GoodUnknownFrame:
    """平面背景上的线性化框架，dt 由 CFL 数确定"""
    base = Grid(n1, n2, n3, x1_max, TWO_PI, TWO_PI, T, 2)
    speeds = phase_speeds(background_field(base, plus, minus), planar_front(base), eos, tol_parallel)
    nt = max(2, int(math.ceil(T * cfl_rate(base, speeds) / cfl)) + 1)
    grid = base.with_time(T, nt)
    diffs = make_scheme_diffs(grid, speeds)
    return GoodUnknownFrame(background_field(grid, plus, minus), planar_front(grid), eos, diffs,
                            tol_parallel)


# ===== 构造解 =====

@dataclass
class ManufacturedSolution:
    """W* = t²·profile(x1)·cos(x2)·c±，φ* = t²·a·cos(x2)，以及与之相容的 F 与 h"""
    W: TwoPhaseField
    phi: np.ndarray
    F: TwoPhaseField
    h: np.ndarray


def _profile(x1, center: float = MANUFACTURED_CENTER, width: float = MANUFACTURED_WIDTH):
    """x1 方向高斯包络及其导数"""
    g = np.exp(-(x1 - center) ** 2 / (2.0 * width ** 2))
    return g, -(x1 - center) / width ** 2 * g


def manufactured_solution(frame: GoodUnknownFrame, amplitude: float = 1e-2,
                          front_amplitude: float = 1e-2) -> ManufacturedSolution:
    """
    常数框架上（E = 0）按解析导数给出 F = A0∂tW* + Ā1∂1W* + A2∂2W* + A3∂3W*，
    边界数据

        h1± = ∂tφ* − X2*± + U3±∂2φ* + U4±∂3φ*
        h2± = X5*± − U6±∂2φ* − U7±∂3φ*
        h3  = X1*⁺ − X1*⁻
    """
    grid = frame.grid
    t, x1, x2, _ = grid.mesh()
    g, dg = _profile(x1)
    shape = amplitude * t ** 2 * g * np.cos(x2) * np.ones(grid.shape)
    d_t = amplitude * 2.0 * t * g * np.cos(x2) * np.ones(grid.shape)
    d_1 = amplitude * t ** 2 * dg * np.cos(x2) * np.ones(grid.shape)
    d_2 = -amplitude * t ** 2 * g * np.sin(x2) * np.ones(grid.shape)

    W, F = {}, {}
    for sign in SIGNS:
        c = _MANUFACTURED_DIRECTIONS[sign][:, None, None, None, None]
        W[sign] = c * shape
        F[sign] = np.empty_like(W[sign])
        for m in range(grid.nt):
            A0, A1b, A2, _ = frame.matrices(sign, m)
            F[sign][:, m] = (apply_matrix(A0, c[:, 0] * d_t[m]) + apply_matrix(A1b, c[:, 0] * d_1[m])
                             + apply_matrix(A2, c[:, 0] * d_2[m]))

    tb = grid.t[:, None, None]
    xb = grid.x2[None, :, None]
    phi = front_amplitude * tb ** 2 * np.cos(xb) * np.ones(grid.boundary_shape)
    phi_t = front_amplitude * 2.0 * tb * np.cos(xb) * np.ones(grid.boundary_shape)
    phi_2 = -front_amplitude * tb ** 2 * np.sin(xb) * np.ones(grid.boundary_shape)

    X = {sign: frame.to_X(sign, W[sign])[:, :, 0] for sign in SIGNS}
    Ub = {sign: frame.U[sign][:, :, 0] for sign in SIGNS}
    h = np.stack([
        phi_t - X[1][1] + Ub[1][2] * phi_2,
        phi_t - X[-1][1] + Ub[-1][2] * phi_2,
        X[1][4] - Ub[1][5] * phi_2,
        X[-1][4] - Ub[-1][5] * phi_2,
        X[1][0] - X[-1][0],
    ])
    return ManufacturedSolution(
        W=TwoPhaseField(W[1], W[-1], grid, vanishing_past=True),
        phi=phi,
        F=TwoPhaseField(F[1], F[-1], grid, vanishing_past=True),
        h=h,
    )


@dataclass
class RefinementRow:
    n: int
    h: float
    error_W: float
    error_phi: float
    gap: float
    gap_fd: float
    bc_residual: float
    order_W: float = math.nan
    order_phi: float = math.nan
    order_gap_fd: float = math.nan

    def as_row(self) -> Dict[str, float]:
        return dict(self.__dict__)


@dataclass
class ManufacturedStudy:
    rows: List[RefinementRow]

    @property
    def min_order(self) -> float:
        orders = [r.order_W for r in self.rows[1:]] + [r.order_phi for r in self.rows[1:]]
        return min(orders) if orders else math.nan

    @property
    def min_gap_order(self) -> float:
        orders = [r.order_gap_fd for r in self.rows[1:]]
        return min(orders) if orders else math.nan


def manufactured_study(eos: Eos, levels: Sequence[int] = REFINEMENT_LEVELS, T: float = 0.5,
                       amplitude: float = 1e-2, cfl: float = DEFAULT_CFL,
                       zero_forcing: bool = False) -> ManufacturedStudy:
    """
    二维约化模式下的构造解加密：n1 = n2 = N，n3 = 1

    误差取 max_t ‖W(t) − W*(t)‖₀ 与 max|φ − φ*|；zero_forcing 时数据与构造解均取零。
    """
    rows = []
    for n in levels:
        frame = planar_frame(n, n, T, eos, cfl=cfl)
        grid = frame.grid
        scale = 0.0 if zero_forcing else amplitude
        exact = manufactured_solution(frame, scale, scale)
        report = solve_linearized(frame, exact.F, exact.h, cfl=cfl)
        norm0 = AnisotropicNorm(grid, 0, 0.0)
        err = report.W - exact.W
        per_level = np.sqrt(norm0.per_slice(err.plus, 0) ** 2 + norm0.per_slice(err.minus, 0) ** 2)
        rows.append(RefinementRow(
            n=n,
            h=grid.dx1,
            error_W=float(np.max(per_level)),
            error_phi=float(np.max(np.abs(report.phi - exact.phi))),
            gap=report.max_gap,
            gap_fd=report.max_gap_fd,
            bc_residual=report.bc_residual,
        ))
        logger.info(f"构造解 N={n}: 误差 W={rows[-1].error_W:.3e}, φ={rows[-1].error_phi:.3e}, "
                    f"间隙={rows[-1].gap_fd:.3e}")
    for key, target in (("error_W", "order_W"), ("error_phi", "order_phi"), ("gap_fd", "order_gap_fd")):
        for row, order in zip(rows, refinement_orders([getattr(r, key) for r in rows])):
            setattr(row, target, order)
    return ManufacturedStudy(rows)


# ===== 能量常数 =====

def energy_study(eos: Eos, n: int = 32, T: float = 1.0, mu_list: Sequence[float] = ENERGY_MU,
                 amplitude: float = 1e-2, s: int = 0, cfl: float = DEFAULT_CFL,
                 zero_forcing: bool = False) -> EnergyReport:
    """F = t·g(x)，h = 0 的线性运行上测量 C0(μ)"""
    frame = planar_frame(n, n, T, eos, cfl=cfl)
    grid = frame.grid
    t, x1, x2, _ = grid.mesh()
    g, _ = _profile(x1)
    scale = 0.0 if zero_forcing else amplitude
    base = scale * t * g * np.cos(x2) * np.ones(grid.shape)
    F = TwoPhaseField(_MANUFACTURED_DIRECTIONS[1][:, None, None, None, None] * base,
                      _MANUFACTURED_DIRECTIONS[-1][:, None, None, None, None] * base,
                      grid, vanishing_past=True)
    h = np.zeros((5,) + grid.boundary_shape)
    report = solve_linearized(frame, F, h, cfl=cfl)
    energy = energy_report(report, F, h, s, mu_list)
    logger.info(f"能量常数: C0={['%.3f' % c for c in energy.c0]}, 漂移={energy.drift:.3f}")
    return energy


# ===== ∇·H 输运 =====

@dataclass
class DivergenceRow:
    n: int
    h: float
    div_l2: float
    div_max: float
    order: float = math.nan

    def as_row(self) -> Dict[str, float]:
        return dict(self.__dict__)


def _periodic_box(n: int, T: float, n3: int = 1) -> Grid:
    return Grid(n - 1, n, n3, TWO_PI, TWO_PI, TWO_PI, T, 2, periodic_x1=True)


def divergence_study(eos: Eos, levels: Sequence[int] = REFINEMENT_LEVELS, T: float = 0.5,
                     a: float = 0.1, b: float = 0.1, cfl: float = DEFAULT_CFL) -> List[DivergenceRow]:
    """
    全周期盒子上单相推进（λ = 0，平面前沿），监测 ∇·H

    H = (a sin x2, 1 + b sin x1, 0.5) 初始无散，速度 v = (0.2 sin x2, 0.1 sin x1, 0)。
    """
    rows = []
    for n in levels:
        space = _periodic_box(n, T)
        x1 = space.x1[:, None, None]
        x2 = space.x2[None, :, None]
        U0 = np.zeros((8, space.n1 + 1, space.n2, space.n3))
        U0[0] = 1.0
        U0[1] = 0.2 * np.sin(x2) * np.ones_like(x1)
        U0[2] = 0.1 * np.sin(x1) * np.ones_like(x2)
        U0[4] = a * np.sin(x2) * np.ones_like(x1)
        U0[5] = 1.0 + b * np.sin(x1) * np.ones_like(x2)
        U0[6] = 0.5
        ones = np.ones(U0.shape[1:])
        speeds = scheme_speeds(U0, (0.0 * ones, ones, 0.0 * ones, 0.0 * ones), 0.0, eos)
        nt = max(2, int(math.ceil(T * cfl_rate(space, {1: speeds}) / cfl)) + 1)
        grid = space.with_time(T, nt)
        diff = SchemeDiff(grid, speeds.alpha, speeds.beta)
        Psi0 = np.broadcast_to(grid.x1[:, None, None], U0.shape[1:]).copy()
        run = evolve_nonlinear({1: U0}, {1: Psi0}, grid, eos, {1: diff}, lam=0.0, use_front=False)
        H = run.U[1][IDX_H]
        central = CentralDiff(grid)
        div = central.x1(H[0]) + central.x2(H[1]) + central.x3(H[2])
        norm0 = AnisotropicNorm(grid, 0, 0.0)
        rows.append(DivergenceRow(n=n, h=grid.dx1, div_l2=float(np.max(norm0.per_slice(div, 0))),
                                  div_max=float(np.max(np.abs(div)))))
        logger.info(f"∇·H 输运 N={n}: ‖∇·H‖₀={rows[-1].div_l2:.3e}")
    for row, order in zip(rows, refinement_orders([r.div_l2 for r in rows])):
        row.order = order
    return rows


# ===== 离散稳定性 =====

@dataclass
class StabilityResult:
    energy: np.ndarray
    growth: float
    t: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))


def stability_study(eos: Eos, rng: np.random.Generator, n: int = 32, T: float = 1.0,
                    amplitude: float = 1e-3, cfl: float = DEFAULT_CFL) -> StabilityResult:
    """F = 0、h = 0，在 t = dt 层注入随机扰动，记录能量增长倍数 max_t E(t)/E(dt)"""
    frame = planar_frame(n, n, T, eos, cfl=cfl)
    grid = frame.grid
    shape = (8, grid.n1 + 1, grid.n2, grid.n3)
    initial = {sign: amplitude * rng.standard_normal(shape) for sign in SIGNS}
    zero = TwoPhaseField.zeros(grid)
    report = solve_linearized(frame, zero, np.zeros((5,) + grid.boundary_shape), initial=initial,
                              cfl=cfl)
    energy = report.energy
    growth = float(np.max(energy[1:]) / energy[1]) if energy[1] > 0 else 1.0
    logger.info(f"离散稳定性: 能量增长倍数 {growth:.3f}")
    return StabilityResult(energy=energy, growth=growth, t=grid.t)


# ===== 线性化恒等式 =====

def _smooth_field(rng: np.random.Generator, grid: Grid, components: Optional[int],
                  amplitude: float, modes: int = 3) -> np.ndarray:
    """低波数三角多项式之和（时间、x1、x2 方向周期）"""
    t, x1, x2, x3 = grid.mesh()
    lead = () if components is None else (components,)
    out = np.zeros(lead + grid.shape)
    for _ in range(modes):
        kt, k1, k2 = rng.integers(0, 2, size=3)
        weights = rng.uniform(-1.0, 1.0, size=lead + (1, 1, 1, 1))
        phase = rng.uniform(0.0, TWO_PI, size=lead + (1, 1, 1, 1))
        out = out + weights * np.cos(kt * t + k1 * x1 + k2 * x2 + phase)
    return amplitude * out / modes


def spectral_box(n: int = 16) -> Grid:
    """时空全周期盒子：时间周期 nt·dt = 2π"""
    return Grid(n - 1, n, 1, TWO_PI, TWO_PI, TWO_PI, TWO_PI * (n - 1) / n, n, periodic_x1=True)


@dataclass
class LinearizationStudy:
    checks: List[LinearizationCheck]

    @property
    def min_slope(self) -> float:
        return min(c.slope for c in self.checks)

    def rows(self) -> List[Dict[str, float]]:
        out = []
        for k, check in enumerate(self.checks):
            for step, err in zip(check.steps, check.errors):
                out.append({"config": k, "step": step, "error": err, "slope": check.slope})
        return out


def linearization_study(eos: Eos, rng: np.random.Generator, configurations: int = 20, n: int = 16,
                        steps: Sequence[float] = LINEARIZATION_STEPS) -> LinearizationStudy:
    """随机光滑配置上的一阶变分恒等式，差分导数用 FFT"""
    grid = spectral_box(n)
    diff = SpectralDiff.from_grid(grid)
    bg = np.asarray(DEFAULT_BACKGROUND_PLUS)[:, None, None, None, None]
    pair = lambda_fields(np.asarray(DEFAULT_BACKGROUND_PLUS), np.asarray(DEFAULT_BACKGROUND_MINUS))
    lam = float(pair.lambda_plus)
    checks = []
    for k in range(configurations):
        U = bg + _smooth_field(rng, grid, 8, 0.05)
        Psi = _smooth_field(rng, grid, None, 0.05)
        V = _smooth_field(rng, grid, 8, 0.1)
        Phi = _smooth_field(rng, grid, None, 0.05)
        check = linearization_check(U, Psi, V, Phi, lam, eos, diff, steps, x1_slope=1.0)
        logger.debug(f"线性化检验 配置 {k}: 斜率={check.slope:.3f}")
        checks.append(check)
    study = LinearizationStudy(checks)
    logger.info(f"线性化恒等式: 最小斜率 {study.min_slope:.3f}（{configurations} 个配置）")
    return study


# ===== 平面保持 =====

@dataclass
class PlanarPreservation:
    steps: int
    state_deviation: float
    front_deviation: float
    boundary_residual: float

    @property
    def max_residual(self) -> float:
        return max(self.state_deviation, self.front_deviation, self.boundary_residual)


def planar_preservation(eos: Eos, steps: int = 100, shape: Tuple[int, int, int] = (16, 16, 8),
                        x1_max: float = 3.0, cfl: float = DEFAULT_CFL) -> PlanarPreservation:
    """精确平面电流-涡面的非线性推进（含程函方程），格式对常数态精确"""
    n1, n2, n3 = shape
    space = Grid(n1, n2, n3, x1_max, TWO_PI, TWO_PI, 1.0, 2)
    speeds = phase_speeds(background_field(space), planar_front(space), eos)
    dt = cfl / cfl_rate(space, speeds)
    grid = space.with_time(steps * dt, steps + 1)
    diffs = make_scheme_diffs(grid, speeds)
    bg = background_field(grid)
    U0 = {sign: bg[sign][:, 0].copy() for sign in SIGNS}
    Psi0 = {sign: lift_front(np.zeros((n2, n3)), grid, sign) for sign in SIGNS}
    run = evolve_nonlinear(U0, Psi0, grid, eos, diffs)
    state_dev = max(float(np.max(np.abs(run.U[s] - bg[s]))) for s in SIGNS)
    front_dev = max(float(np.max(np.abs(run.Psi[s] - Psi0[s][None]))) for s in SIGNS)
    U = TwoPhaseField(run.U[1], run.U[-1], grid)
    front = front_from_lifts(run.Psi[1], run.Psi[-1], grid)
    bres = float(np.max(np.abs(boundary_residual(U, front, diffs[1]))))
    result = PlanarPreservation(steps=steps, state_deviation=state_dev, front_deviation=front_dev,
                                boundary_residual=bres)
    logger.info(f"平面保持: {steps} 步后最大残差 {result.max_residual:.3e}")
    return result


# ===== 相容性数据与一步推进的比较 =====

def compat_oracle(U0: Dict[int, np.ndarray], psi0: np.ndarray, grid: Grid, eos: Eos,
                  diffs: Dict[int, SchemeDiff], U1: Dict[int, np.ndarray]) -> float:
    """一步非线性推进的差商 (U(dt) − U0)/dt 与 U_1 在非远端节点上的最大差"""
    step_grid = grid.with_time(grid.dt, 2)
    step_diffs = {s: SchemeDiff(step_grid, d.alpha, d.beta) for s, d in diffs.items()}
    Psi0 = {s: lift_front(psi0, grid, s) for s in SIGNS}
    run = evolve_nonlinear(U0, Psi0, step_grid, eos, step_diffs)
    return max(float(np.max(np.abs((run.U[s][:, 1, :-1] - U0[s][:, :-1]) / step_grid.dt
                                   - U1[s][:, :-1]))) for s in SIGNS)
