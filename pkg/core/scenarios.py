"""
场景库 - 由运行配置构造背景态、初始扰动、网格与近似解
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from config.run_config import RunConfig
from core.approx_solution import (
    ApproxSolution,
    ReformulatedProblem,
    build_compat_data,
    build_zeroth_order,
)
from core.differences import SchemeDiff
from core.eos_state import Eos, Grid, TwoPhaseField
from core.function_spaces import AnisotropicNorm
from core.geometry_transform import (
    SIGNS,
    PhaseSpeeds,
    cfl_rate,
    front_from_lifts,
    lift_front,
    make_scheme_diffs,
    phase_speeds,
)
from core.nash_moser import IterationSettings

logger = logging.getLogger(__name__)

# 受扰动的分量：p, v2, v3, S 用完整切向模；H2 只随 x3、H3 只随 x2 变化，使 ∇·H = 0
PERTURBED_FULL = (0, 2, 3, 7)


def space_grid(config: RunConfig) -> Grid:
    """只含空间信息的网格（两层时间，供速度估计）"""
    g = config.grid
    return Grid(g.n1, g.n2, g.n3, g.x1_max, g.L2, g.L3, config.time.T, 2)


def time_grid(space: Grid, T: float, speeds: Dict[int, PhaseSpeeds], cfl: float) -> Grid:
    """按 dt·max Σ α_j/dx_j ≤ cfl 选取时间层数"""
    rate = cfl_rate(space, speeds)
    nt = max(2, int(math.ceil(T * rate / cfl)) + 1)
    return space.with_time(T, nt)


def background_states(config: RunConfig) -> Tuple[np.ndarray, np.ndarray]:
    return (np.asarray(config.background.plus, dtype=float),
            np.asarray(config.background.minus, dtype=float))


def _envelope(config: RunConfig, grid: Grid) -> np.ndarray:
    pert = config.perturbation
    x1 = grid.x1[:, None, None]
    return np.exp(-(x1 - pert.center) ** 2 / (2.0 * pert.width ** 2))


def mode_weights(config: RunConfig, grid: Grid) -> np.ndarray:
    """
    切向倍频 m = 1..M 的权重 c_m，Σ c_m = 1

    c_m·‖χ(x1)cos(m·k2·x2)‖_s ∝ m^{−decay}，范数取离散 s0 阶（受网格分辨率截断），
    数据的切向谱衰减因此与差分算子无关。M 不超过 n2/4 内可分辨的倍频数。
    """
    pert = config.perturbation
    if pert.mode2 == 0 or grid.n2 == 1:
        return np.ones(1)
    count = max(1, min(pert.n_modes, (grid.n2 // 4) // pert.mode2))
    norm = AnisotropicNorm(grid, 0, 0.0)
    s = min(config.iteration.s0, norm.s_max)
    envelope = _envelope(config, grid)
    x2 = grid.x2[None, :, None]
    sizes = np.empty(count)
    for m in range(1, count + 1):
        k2 = 2.0 * np.pi * m * pert.mode2 / grid.L2
        mode = np.broadcast_to(envelope * np.cos(k2 * x2), grid.shape[1:])
        sizes[m - 1] = norm.per_slice(mode[None], s)[0]
    m = np.arange(1, count + 1, dtype=float)
    weights = m ** (-pert.spectral_decay) * sizes[0] / sizes
    return weights / np.sum(weights)


def initial_data(config: RunConfig, grid: Grid, seed: Optional[int] = None
                 ) -> Tuple[Dict[int, np.ndarray], np.ndarray]:
    """
    背景态加 x1 方向高斯包络乘切向余弦模之和

    各分量的权重与每个倍频的相位由 default_rng(seed) 给出，倍频权重见 mode_weights，
    扰动幅度不超过 δ；ψ0 = front_amplitude·cos(k2x2 + k3x3)，H1 按 U_{H,N} = 0 取值。
    """
    pert = config.perturbation
    rng = np.random.default_rng(pert.seed if seed is None else seed)
    k2 = 2.0 * np.pi * pert.mode2 / grid.L2
    k3 = 2.0 * np.pi * pert.mode3 / grid.L3
    x2 = grid.x2[None, :, None]
    x3 = grid.x3[None, None, :]
    envelope = _envelope(config, grid)
    psi0 = pert.front_amplitude * np.cos(k2 * x2[0] + k3 * x3[0])
    c = mode_weights(config, grid)
    orders = np.arange(1, len(c) + 1)[:, None, None, None]

    Ubar = dict(zip(SIGNS, background_states(config)))
    U0 = {}
    for s in SIGNS:
        weights = rng.uniform(0.5, 1.0, size=8) * rng.choice([-1.0, 1.0], size=8)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(8, len(c)))
        U = np.broadcast_to(Ubar[s][:, None, None, None],
                            (8, grid.n1 + 1, grid.n2, grid.n3)).copy()
        amp = pert.amplitude
        for j in PERTURBED_FULL:
            waves = np.cos(orders * k2 * x2 + k3 * x3 + phases[j][:, None, None, None])
            U[j] += amp * weights[j] * envelope * np.tensordot(c, waves, axes=1)
        U[5] += amp * weights[5] * envelope * np.cos(k3 * x3 + phases[5, 0]) * np.ones_like(x2)
        waves = np.cos(orders * k2 * x2 + phases[6][:, None, None, None]) * np.ones_like(x3)
        U[6] += amp * weights[6] * envelope * np.tensordot(c, waves, axes=1)
        Psi0 = lift_front(psi0, grid, s)
        diff = SchemeDiff(grid)
        U[4] = diff.x2(Psi0) * U[5] + diff.x3(Psi0) * U[6]
        U0[s] = U
    logger.debug(f"初始扰动: δ={pert.amplitude}, 模数=({pert.mode2}, {pert.mode3}), "
                 f"倍频数={len(c)}, 权重={np.round(c, 4).tolist()}, 前沿幅值={pert.front_amplitude}")
    return U0, psi0


def settings_from_config(config: RunConfig) -> IterationSettings:
    it, tol = config.iteration, config.tolerance
    return IterationSettings(
        theta0=it.theta0,
        n_max=it.n_max,
        s_list=list(it.s_list),
        s0=it.s0,
        alpha=it.alpha,
        s1=it.s1,
        cfl=config.time.cfl,
        kappa_min=tol.kappa_min,
        tol_parallel=tol.parallel,
        tol_constraint=tol.constraint,
        tol_telescoping=tol.telescoping,
        patience=tol.divergence_patience,
        fit_start=it.fit_start,
    )


@dataclass
class Scenario:
    """一次运行所需的全部离散对象"""
    name: str
    config: RunConfig
    eos: Eos
    grid: Grid
    U0: Dict[int, np.ndarray]
    psi0: np.ndarray
    speeds: Dict[int, PhaseSpeeds]
    diffs: Dict[int, SchemeDiff]
    _approx: Optional[ApproxSolution] = field(default=None, repr=False)

    @property
    def delta(self) -> float:
        return self.config.perturbation.amplitude

    def approx(self) -> ApproxSolution:
        """相容性数据与零阶近似解（缓存）"""
        if self._approx is None:
            tol = self.config.tolerance
            data = build_compat_data(self.U0, self.psi0, self.config.perturbation.compat_order,
                                     self.grid, self.eos, self.diffs, tol.parallel)
            self._approx = build_zeroth_order(data, self.grid, self.diffs, delta=self.delta,
                                              kappa_min=tol.kappa_min, tol_parallel=tol.parallel)
        return self._approx

    def problem(self) -> ReformulatedProblem:
        return ReformulatedProblem(self.approx())

    def settings(self) -> IterationSettings:
        return settings_from_config(self.config)


def build_scenario(config: RunConfig, seed: Optional[int] = None) -> Scenario:
    """
    由配置构造场景

    耗散速度由初值处的冻结系数确定，dt 由 CFL 数给出；两相共用前沿耗散速度 β。
    """
    eos = Eos(config.eos.gamma, config.eos.reference_entropy_scale)
    space = space_grid(config)
    U0, psi0 = initial_data(config, space, seed)
    stacked = TwoPhaseField(np.stack([U0[1]] * 2, axis=1), np.stack([U0[-1]] * 2, axis=1), space)
    lifts = {s: np.stack([lift_front(psi0, space, s)] * 2) for s in SIGNS}
    front = front_from_lifts(lifts[1], lifts[-1], space)
    speeds = phase_speeds(stacked, front, eos, config.tolerance.parallel)
    grid = time_grid(space, config.time.T, speeds, config.time.cfl)
    diffs = make_scheme_diffs(grid, speeds)
    logger.info(f"场景 {config.scenario}: 网格 {grid.n1}×{grid.n2}×{grid.n3}, nt={grid.nt}, "
                f"dt={grid.dt:.3e}, α⁺={tuple(round(a, 3) for a in speeds[1].alpha)}")
    return Scenario(name=config.scenario, config=config, eos=eos, grid=grid, U0=U0, psi0=psi0,
                    speeds=speeds, diffs=diffs)
