"""
前沿几何 - 速端变换后的前沿提升、程函方程推进、变换算子 L(U,Ψ) 与边界算子

两相都放在固定区域 {x1 ≥ 0} 上：Ψ⁺ 描述 x1 > ψ 的一侧，Ψ⁻ 描述另一侧，
二者在 x1 = 0 上的迹都等于 ψ。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from config.constants import (
    DEFAULT_COLLAR_FRACTION,
    DEFAULT_KAPPA_MIN,
    DEFAULT_TOL_PARALLEL,
    FRONT_SPEED_FACTOR,
    FRONT_SPEED_FLOOR,
    IDX_H,
    SPEED_SAFETY_FACTOR,
)
from core.differences import CentralDiff, SchemeDiff
from core.eos_state import Eos, Grid, MhdState, TwoPhaseField
from core.exceptions import FrontDegenerate
from core.function_spaces import cutoff_width, x1_cutoff
from core.mhd_system import (
    SymmetricSystem,
    apply_matrix,
    augmented_matrices,
    characteristic_speeds,
    lambda_fields,
)

logger = logging.getLogger(__name__)

SIGNS = (1, -1)


class FrontGradients(NamedTuple):
    """(∂tΨ, ∂1Ψ, ∂2Ψ, ∂3Ψ)"""
    t: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray


def front_gradients(Psi: np.ndarray, diff) -> FrontGradients:
    """SchemeDiff 下时间导数取前沿型（无 x1 耗散，切向速度 β）"""
    if isinstance(diff, SchemeDiff):
        dt = diff.t(Psi, front=True)
    else:
        dt = diff.t(Psi)
    return FrontGradients(dt, diff.x1(Psi), diff.x2(Psi), diff.x3(Psi))


@dataclass
class FrontGeometry:
    """
    前沿迹 ψ(t,x2,x3) 与两侧提升 Ψ±(t,x)

    kappa 为 min ±∂1Ψ±，trace_gap 为两侧迹之差的最大值。
    """
    psi: np.ndarray
    Psi_plus: np.ndarray
    Psi_minus: np.ndarray
    grid: Grid
    kappa: float = 1.0
    trace_gap: float = 0.0

    @property
    def Psi(self) -> TwoPhaseField:
        return TwoPhaseField(self.Psi_plus, self.Psi_minus, self.grid)

    def __getitem__(self, sign: int) -> np.ndarray:
        return self.Psi_plus if sign > 0 else self.Psi_minus

    def gradients(self, sign: int, diff) -> FrontGradients:
        return front_gradients(self[sign], diff)

    def check(self, kappa_min: float = DEFAULT_KAPPA_MIN, diff=None) -> float:
        """检查 ±∂1Ψ± ≥ κ_min，返回实际 κ"""
        diff = diff or CentralDiff(self.grid)
        kappa = min(float(np.min(sign * diff.x1(self[sign]))) for sign in SIGNS)
        self.kappa = kappa
        if kappa < kappa_min:
            raise FrontDegenerate("速端变换失效：±∂x1Ψ± 低于下界",
                                  {"kappa": kappa, "kappa_min": kappa_min})
        return kappa


def lift_front(psi: np.ndarray, grid: Grid, sign: int) -> np.ndarray:
    """Ψ± = ±x1 + χ(x1)·ψ，χ(0) = 1，x1 ≥ 截断宽度时为 0"""
    psi = np.asarray(psi, dtype=float)
    chi = x1_cutoff(grid.x1, cutoff_width(grid))[:, None, None]
    return sign * grid.x1[:, None, None] + chi * np.expand_dims(psi, -3)


def planar_front(grid: Grid) -> FrontGeometry:
    zero = np.zeros(grid.boundary_shape)
    return FrontGeometry(zero, lift_front(zero, grid, 1), lift_front(zero, grid, -1), grid)


def front_from_lifts(Psi_plus: np.ndarray, Psi_minus: np.ndarray, grid: Grid) -> FrontGeometry:
    """由两侧提升构造前沿，ψ 取两侧迹的平均"""
    tp, tm = Psi_plus[..., 0, :, :], Psi_minus[..., 0, :, :]
    gap = float(np.max(np.abs(tp - tm))) if tp.size else 0.0
    return FrontGeometry(0.5 * (tp + tm), Psi_plus, Psi_minus, grid, trace_gap=gap)


def enforce_normal_field(U: np.ndarray, grads: FrontGradients) -> np.ndarray:
    """由 U_{H,N} = U5 − ∂2Ψ U6 − ∂3Ψ U7 = 0 求解 U5"""
    out = np.array(U, dtype=float, copy=True)
    out[4] = grads.x2 * out[5] + grads.x3 * out[6]
    return out


# ===== 变换后的系数矩阵 =====

def transformed_normal(grads: Sequence[np.ndarray]) -> Tuple[np.ndarray, ...]:
    """(A0, A1, A2, A3) 的缩并系数 (−∂tΨ, 1, −∂2Ψ, −∂3Ψ)/∂1Ψ"""
    Pt, P1, P2, P3 = (np.asarray(g, dtype=float) for g in grads)
    return -Pt / P1, 1.0 / P1, -P2 / P1, -P3 / P1


def lbar_matrices(U: np.ndarray, grads: Sequence[np.ndarray], lam, eos: Eos,
                  kappa_min: float = 0.0):
    """
    场版本的 (A0, Ā1, A2, A3)

    Ā1 = (A1 − ∂tΨ·A0 − ∂2Ψ·A2 − ∂3Ψ·A3)/∂1Ψ
    """
    Pt, P1, P2, P3 = (np.asarray(g, dtype=float) for g in grads)
    if kappa_min > 0 and np.any(np.abs(P1) < kappa_min):
        raise FrontDegenerate("|∂x1Ψ| 低于 κ_min",
                              {"min": float(np.min(np.abs(P1))), "kappa_min": kappa_min})
    A0, A1, A2, A3 = augmented_matrices(U, lam, eos)
    e = lambda g: np.asarray(g)[..., None, None]
    A1bar = (A1 - e(Pt) * A0 - e(P2) * A2 - e(P3) * A3) / e(P1)
    return A0, A1bar, A2, A3


def assemble_Lbar(U: MhdState, Psi_grads: Sequence[float], lam: float,
                  kappa_min: float = DEFAULT_KAPPA_MIN) -> SymmetricSystem:
    """单点 (A0, Ā1, A2, A3)"""
    if abs(Psi_grads[1]) < kappa_min:
        raise FrontDegenerate("|∂x1Ψ| 低于 κ_min", {"dx1_Psi": Psi_grads[1], "kappa_min": kappa_min})
    mats = lbar_matrices(U.as_vector(), [np.asarray(g, dtype=float) for g in Psi_grads], lam, U.eos)
    return SymmetricSystem(*mats, augmented=True)


def apply_L(U: np.ndarray, grads: FrontGradients, lam, eos: Eos, diff,
            V: Optional[np.ndarray] = None) -> np.ndarray:
    """
    L(U,Ψ)V = A0∂tV + Ā1∂1V + A2∂2V + A3∂3V

    系数在 U 处取值；V 缺省为 U。导数由 diff 给出，逐时间层组装矩阵。
    """
    U = np.asarray(U, dtype=float)
    V = U if V is None else np.asarray(V, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), U.shape[1:])
    dV = (diff.t(V), diff.x1(V), diff.x2(V), diff.x3(V))
    out = np.empty_like(V)
    for m in range(U.shape[1]):
        level_grads = [g[m] for g in grads]
        A0, A1b, A2, A3 = lbar_matrices(U[:, m], level_grads, lam[m], eos)
        out[:, m] = (apply_matrix(A0, dV[0][:, m]) + apply_matrix(A1b, dV[1][:, m])
                     + apply_matrix(A2, dV[2][:, m]) + apply_matrix(A3, dV[3][:, m]))
    return out


def lambda_from_traces(U: TwoPhaseField, tol_parallel: float = DEFAULT_TOL_PARALLEL):
    """
    由 x1 = 0 上的迹计算 λ±，沿 x1 方向取常数

    Returns:
        (λ⁺, λ⁻)，形状与标量场相同
    """
    Up, Um = U.boundary()
    pair = lambda_fields(Up, Um, tol_parallel)
    shape = U.grid.shape
    expand = lambda a: np.broadcast_to(np.expand_dims(a, -3), shape)
    return expand(pair.lambda_plus), expand(pair.lambda_minus)


# ===== 边界算子 =====

def boundary_operator(Uplus, Uminus, psi_t, psi_x2, psi_x3) -> np.ndarray:
    """
    B(U⁺, U⁻, ψ) = (ψt − U_{v,N}⁺, ψt − U_{v,N}⁻, U_{H,N}⁺, U_{H,N}⁻, q⁺ − q⁻)

    U_{v,N} = U2 − ψx2·U3 − ψx3·U4，U_{H,N} = U5 − ψx2·U6 − ψx3·U7。
    输入可以是 MhdState 或 (8, ...) 数组。
    """
    Up = Uplus.as_vector() if isinstance(Uplus, MhdState) else np.asarray(Uplus, dtype=float)
    Um = Uminus.as_vector() if isinstance(Uminus, MhdState) else np.asarray(Uminus, dtype=float)

    def normal(U, i):
        return U[i] - psi_x2 * U[i + 1] - psi_x3 * U[i + 2]

    qp = Up[0] + 0.5 * np.sum(Up[IDX_H] ** 2, axis=0)
    qm = Um[0] + 0.5 * np.sum(Um[IDX_H] ** 2, axis=0)
    return np.stack([
        psi_t - normal(Up, 1),
        psi_t - normal(Um, 1),
        normal(Up, 4),
        normal(Um, 4),
        qp - qm,
    ])


def boundary_residual(U: TwoPhaseField, front: FrontGeometry, diff) -> np.ndarray:
    """在场的迹与 ψ 上求值边界算子，ψ 的导数用前沿型差分"""
    psi = front.psi
    psi_t = diff.boundary_t(psi)
    psi_x2, psi_x3 = diff.x2(psi), diff.x3(psi)
    Up, Um = U.boundary()
    return boundary_operator(Up, Um, psi_t, psi_x2, psi_x3)


# ===== 程函方程 =====

def eikonal_rate(Psi: np.ndarray, v: np.ndarray, diff: SchemeDiff) -> np.ndarray:
    """v1 − v2∂2Ψ − v3∂3Ψ + 前沿耗散"""
    return (v[0] - v[1] * diff.x2(Psi) - v[2] * diff.x3(Psi)
            + diff.dissipation(Psi, front=True))


def solve_eikonal(vfield: TwoPhaseField, front0: FrontGeometry, diffs: Dict[int, SchemeDiff],
                  kappa_min: float = DEFAULT_KAPPA_MIN) -> FrontGeometry:
    """
    显式推进 ∂tΨ± = v1± − v2±∂2Ψ± − v3±∂3Ψ±

    时间步长与场求解器一致；每步检查 κ。两侧方程在 x1 = 0 上只有在边界条件成立时
    才给出相同的迹，ψ 取两侧迹的平均，迹差记录在 trace_gap 中。

    Args:
        vfield: 两相状态场（取分量 1..3）或速度场
        front0: 初始时刻的前沿（只用第 0 层）
        diffs: 各相的格式算子 {+1: SchemeDiff, -1: SchemeDiff}
        kappa_min: 速端变换有效性下界
    """
    grid = vfield.grid
    nt = grid.nt
    lifts = {}
    for sign, U in vfield.phases():
        v = U[1:4] if U.shape[0] == 8 else U
        diff = diffs[sign]
        Psi = np.empty(grid.shape)
        Psi[0] = front0[sign][0]
        for m in range(nt - 1):
            Psi[m + 1] = Psi[m] + grid.dt * eikonal_rate(Psi[m:m + 1], v[:, m:m + 1], diff)[0]
            kappa = float(np.min(sign * diff.x1(Psi[m + 1])))
            if kappa < kappa_min:
                raise FrontDegenerate("程函推进中速端变换失效",
                                      {"step": m + 1, "kappa": kappa, "kappa_min": kappa_min})
        lifts[sign] = Psi
    front = front_from_lifts(lifts[1], lifts[-1], grid)
    front.check(kappa_min, CentralDiff(grid))
    logger.debug(f"程函推进完成: κ={front.kappa:.4f}, 迹差={front.trace_gap:.3e}")
    return front


class ConstraintNorms(NamedTuple):
    collar_max: float
    collar_l2: float
    global_max: float
    global_l2: float


def _constraint_norms(r: np.ndarray, grid: Grid, collar: np.ndarray) -> ConstraintNorms:
    cell = grid.dt * grid.dx1 * grid.dx2 * grid.dx3
    rc = r[..., collar, :, :]
    return ConstraintNorms(
        collar_max=float(np.max(np.abs(rc))) if rc.size else 0.0,
        collar_l2=float(np.sqrt(cell * np.sum(rc ** 2))),
        global_max=float(np.max(np.abs(r))),
        global_l2=float(np.sqrt(cell * np.sum(r ** 2))),
    )


def eikonal_constraint_residual(field: TwoPhaseField, front: FrontGeometry, diffs: Dict[int, object],
                                collar_fraction: float = DEFAULT_COLLAR_FRACTION,
                                levels: Optional[slice] = None) -> Dict[str, ConstraintNorms]:
    """
    程函方程与 U_{H,N} = 0 的残差

    Returns:
        {"eikonal+": …, "eikonal-": …, "normal_field+": …, "normal_field-": …}
    """
    grid = field.grid
    collar = grid.x1 <= collar_fraction * grid.x1_max
    levels = levels or slice(None)
    out = {}
    for sign, U in field.phases():
        diff = diffs[sign]
        g = front.gradients(sign, diff)
        eik = g.t - (U[1] - U[2] * g.x2 - U[3] * g.x3)
        # 最后一层为后向差分，按外推处理
        eik[-1] = eik[-2]
        hn = U[4] - g.x2 * U[5] - g.x3 * U[6]
        tag = "+" if sign > 0 else "-"
        out[f"eikonal{tag}"] = _constraint_norms(eik[levels], grid, collar)
        out[f"normal_field{tag}"] = _constraint_norms(hn[levels], grid, collar)
    return out


# ===== 格式速度 =====

@dataclass(frozen=True)
class PhaseSpeeds:
    """Rusanov 耗散速度 α_j 与前沿切向耗散速度 β_j"""
    alpha: Tuple[float, float, float]
    beta: Tuple[float, float, float]


def scheme_speeds(U0: np.ndarray, grads0: Sequence[np.ndarray], lam0, eos: Eos) -> PhaseSpeeds:
    """
    由 t = 0 层的状态确定耗散速度

    α_j = 1.25·max|ν|，ν 为 (Ā1, A0)、(A2, A0)、(A3, A0) 的广义特征值；
    β_j = 1.5·max|v_j| + 0.05。
    """
    A0, A1b, A2, A3 = lbar_matrices(U0, grads0, lam0, eos)
    alpha = tuple(SPEED_SAFETY_FACTOR * float(np.max(np.abs(characteristic_speeds(A, A0))))
                  for A in (A1b, A2, A3))
    beta = tuple(FRONT_SPEED_FACTOR * float(np.max(np.abs(U0[1 + j]))) + FRONT_SPEED_FLOOR
                 for j in range(3))
    return PhaseSpeeds(alpha=alpha, beta=beta)


def phase_speeds(U: TwoPhaseField, front: FrontGeometry, eos: Eos,
                 tol_parallel: float = DEFAULT_TOL_PARALLEL) -> Dict[int, PhaseSpeeds]:
    """两相在 t = 0 层的格式速度（空间梯度用中心差分，∂tΨ 由程函方程给出）"""
    grid = U.grid
    diff = CentralDiff(grid)
    lam = dict(zip(SIGNS, lambda_from_traces(U, tol_parallel)))
    speeds = {}
    for sign, field in U.phases():
        Psi0 = front[sign][0]
        g1, g2, g3 = diff.x1(Psi0), diff.x2(Psi0), diff.x3(Psi0)
        v = field[1:4, 0]
        gt = v[0] - v[1] * g2 - v[2] * g3
        speeds[sign] = scheme_speeds(field[:, 0], (gt, g1, g2, g3), lam[sign][0], eos)
    return speeds


def cfl_rate(grid: Grid, speeds: Dict[int, PhaseSpeeds]) -> float:
    """max_± Σ_j α_j/dx_j（只计 n > 1 的方向）"""
    active = [grid.n1 > 0, grid.n2 > 1, grid.n3 > 1]
    rates = []
    for sp in speeds.values():
        rates.append(sum(a / dx for a, dx, on in zip(sp.alpha, grid.spacings, active) if on))
        rates.append(sum(b / dx for b, dx, on in zip(sp.beta[1:], grid.spacings[1:], active[1:]) if on))
    return max(rates)


def make_scheme_diffs(grid: Grid, speeds: Dict[int, PhaseSpeeds]) -> Dict[int, SchemeDiff]:
    """两相共用 β（逐方向取最大），使 ψ 的前沿型时间导数与相无关"""
    beta = tuple(max(sp.beta[j] for sp in speeds.values()) for j in range(3))
    return {sign: SchemeDiff(grid, sp.alpha, beta) for sign, sp in speeds.items()}
