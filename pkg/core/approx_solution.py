"""
近似解 - 相容性数据、零阶近似解 (U_a, Ψ_a) 与改写后的定边界问题

相容性数据的时间导数取格式本身的速率（含 Rusanov 耗散），因此非线性推进一步后的
差商与 U_1 一致，f_a 在 t = 0 处只剩约束修复带来的高阶残差。
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from config.constants import (
    COMPAT_FD_STEP,
    DEFAULT_KAPPA_MIN,
    DEFAULT_TOL_PARALLEL,
    IDX_H,
    LINEARIZATION_REL_STEP,
    N_COMPONENTS,
)
from core.differences import CentralDiff, SchemeDiff
from core.eos_state import Eos, Grid, TwoPhaseField
from core.exceptions import ParameterError
from core.function_spaces import cutoff_width, smooth_step, x1_cutoff
from core.geometry_transform import (
    SIGNS,
    FrontGeometry,
    apply_L,
    boundary_operator,
    front_gradients,
    lambda_from_traces,
    lbar_matrices,
    lift_front,
)
from core.linearized_solver import solve_points
from core.mhd_system import apply_matrix, check_admissible, lambda_fields

logger = logging.getLogger(__name__)

MAX_COMPAT_ORDER = 2


def scheme_rate(U: np.ndarray, Psi: np.ndarray, lam, eos: Eos, diff: SchemeDiff) -> np.ndarray:
    """
    单时间层上格式给出的 ∂tU

    R = D(U) − A0⁻¹(Ā1∂1U + A2∂2U + A3∂3U)，Ā1 中的 ∂tΨ 取程函式 v1 − v2∂2Ψ − v3∂3Ψ。
    """
    P1, P2, P3 = diff.x1(Psi), diff.x2(Psi), diff.x3(Psi)
    Pt = U[1] - U[2] * P2 - U[3] * P3
    lam = np.broadcast_to(np.asarray(lam, dtype=float), Psi.shape)
    A0, A1b, A2, A3 = lbar_matrices(U, (Pt, P1, P2, P3), lam, eos)
    flux = apply_matrix(A1b, diff.x1(U)) + apply_matrix(A2, diff.x2(U)) + apply_matrix(A3, diff.x3(U))
    return diff.dissipation(U) - solve_points(A0, flux)


def _trace_lambda(Uplus: np.ndarray, Uminus: np.ndarray, tol: float) -> Dict[int, np.ndarray]:
    pair = lambda_fields(Uplus[:, 0], Uminus[:, 0], tol)
    return {1: pair.lambda_plus[None], -1: pair.lambda_minus[None]}


@dataclass
class CompatData:
    """t = 0 处的时间导数 U_j (j ≤ k) 与 Ψ_j (j ≤ k+1)"""
    U: Dict[int, List[np.ndarray]]
    Psi: Dict[int, List[np.ndarray]]
    order: int
    grid: Grid
    eos: Eos
    psi0: np.ndarray

    def rate_norms(self) -> List[float]:
        """max|U_j|，j = 0..k"""
        return [max(float(np.max(np.abs(self.U[s][j]))) for s in SIGNS) for j in range(self.order + 1)]


def build_compat_data(U0: Dict[int, np.ndarray], psi0: np.ndarray, k: int, grid: Grid, eos: Eos,
                      diffs: Dict[int, SchemeDiff],
                      tol_parallel: float = DEFAULT_TOL_PARALLEL) -> CompatData:
    """
    由初值计算相容性数据

    Ψ_1 = v1 − v2∂2Ψ0 − v3∂3Ψ0 + 前沿耗散，U_1 为格式速率；
    Ψ_2 由 Leibniz 公式给出；k = 2 时 U_2 为速率沿 (U_1, Ψ_1) 的中心差分方向导数，
    Ψ_3 同样由 Leibniz 公式给出。

    Args:
        U0: 各相初始状态 (8, n1+1, n2, n3)
        psi0: 初始前沿 (n2, n3)
        k: 相容阶数，0 ≤ k ≤ 2

    Raises:
        ParameterError: k 超出范围
        DomainError: 初值不可容许
        DegenerateConfiguration: 前沿上的切向磁场平行
    """
    if not 0 <= k <= MAX_COMPAT_ORDER:
        raise ParameterError(f"相容阶数必须在 0..{MAX_COMPAT_ORDER} 之间，当前为: {k}")
    U0 = {s: np.asarray(U0[s], dtype=float) for s in SIGNS}
    for s in SIGNS:
        check_admissible(U0[s])
    psi0 = np.asarray(psi0, dtype=float)
    lam = _trace_lambda(U0[1], U0[-1], tol_parallel)

    Us = {s: [U0[s]] for s in SIGNS}
    Ps = {s: [lift_front(psi0, grid, s)] for s in SIGNS}

    def eik_rate(diff, v, Psi):
        return v[0] - v[1] * diff.x2(Psi) - v[2] * diff.x3(Psi) + diff.dissipation(Psi, front=True)

    for s in SIGNS:
        d = diffs[s]
        Psi0 = Ps[s][0]
        Ps[s].append(eik_rate(d, U0[s][1:4], Psi0))
        if k >= 1:
            Us[s].append(scheme_rate(U0[s], Psi0, lam[s], eos, d))
            U1, P1 = Us[s][1], Ps[s][1]
            v = U0[s][1:4]
            Ps[s].append(U1[1] - U1[2] * d.x2(Psi0) - v[1] * d.x2(P1)
                         - U1[3] * d.x3(Psi0) - v[2] * d.x3(P1) + d.dissipation(P1, front=True))

    if k >= 2:
        scale = max(float(np.max(np.abs(Us[s][1]))) for s in SIGNS)
        eps = COMPAT_FD_STEP / scale if scale > 0 else 0.0
        for s in SIGNS:
            if eps == 0.0:
                Us[s].append(np.zeros_like(U0[s]))
                continue
            d = diffs[s]
            shifted = {}
            for sign_eps in (1.0, -1.0):
                Ue = {t: U0[t] + sign_eps * eps * Us[t][1] for t in SIGNS}
                lam_e = _trace_lambda(Ue[1], Ue[-1], tol_parallel)
                shifted[sign_eps] = scheme_rate(Ue[s], Ps[s][0] + sign_eps * eps * Ps[s][1],
                                                lam_e[s], eos, d)
            Us[s].append((shifted[1.0] - shifted[-1.0]) / (2.0 * eps))
        for s in SIGNS:
            d = diffs[s]
            U1, U2 = Us[s][1], Us[s][2]
            v = U0[s][1:4]
            P0, P1, P2 = Ps[s][0], Ps[s][1], Ps[s][2]
            Ps[s].append(U2[1]
                         - (U2[2] * d.x2(P0) + 2.0 * U1[2] * d.x2(P1) + v[1] * d.x2(P2))
                         - (U2[3] * d.x3(P0) + 2.0 * U1[3] * d.x3(P1) + v[2] * d.x3(P2))
                         + d.dissipation(P2, front=True))

    data = CompatData(U=Us, Psi=Ps, order=k, grid=grid, eos=eos, psi0=psi0)
    logger.info(f"相容性数据: k={k}, max|U_j| = {', '.join(f'{r:.3e}' for r in data.rate_norms())}")
    return data


# ===== 零阶近似解 =====

def time_cutoff(t: np.ndarray, cutoff_time: float) -> np.ndarray:
    """[0, T/2] 上为 1，t = T 时为 0"""
    half = 0.5 * cutoff_time
    return 1.0 - smooth_step((np.asarray(t, dtype=float) - half) / half)


@dataclass
class ConstraintReport:
    normal_field: float
    pressure_jump: float
    eikonal: float
    trace_identity: float

    def max(self) -> float:
        return max(self.normal_field, self.pressure_jump, self.eikonal, self.trace_identity)


@dataclass
class ApproxSolution:
    """(U_a, Ψ_a, ψ_a) 与 f_a = −L(U_a,Ψ_a)U_a"""
    Ua: TwoPhaseField
    front: FrontGeometry
    f_a: TwoPhaseField
    lam: Dict[int, np.ndarray]
    diffs: Dict[int, SchemeDiff]
    eos: Eos
    order: int = 0
    delta: float = 0.0
    repairs: Dict[str, float] = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.Ua.grid

    @property
    def psi(self) -> np.ndarray:
        return self.front.psi

    def constraint_report(self) -> ConstraintReport:
        normal = 0.0
        eik = 0.0
        trace = 0.0
        for s in SIGNS:
            U, Psi, d = self.Ua[s], self.front[s], self.diffs[s]
            P2, P3 = d.x2(Psi), d.x3(Psi)
            normal = max(normal, float(np.max(np.abs(U[4] - P2 * U[5] - P3 * U[6]))))
            eik = max(eik, float(np.max(np.abs(d.t(Psi, front=True) - U[1] + P2 * U[2] + P3 * U[3]))))
            trace = max(trace, float(np.max(np.abs(Psi[:, 0] - self.psi))))
        Up, Um = self.Ua.boundary()
        jump = total_pressure(Up) - total_pressure(Um)
        return ConstraintReport(normal, float(np.max(np.abs(jump))), eik, trace)

    def compat_defects(self) -> List[float]:
        """max|D_t^j f_a|_{t=0}|，j = 0..max(k−1, 0)，D_t 为前向差分"""
        out = []
        dt = self.grid.dt
        for j in range(max(self.order, 1)):
            vals = []
            for _, f in self.f_a.phases():
                diff_j = np.diff(f[:, : j + 1], n=j, axis=1) if j > 0 else f[:, :1]
                vals.append(float(np.max(np.abs(diff_j[:, 0]))) / dt ** j)
            out.append(max(vals))
        return out

    def boundary_compat(self) -> List[float]:
        """max|D_t^j B(U_a, ψ_a)|_{t=0}|，j = 0..k"""
        res = boundary_operator(*self.Ua.boundary(), self.diffs[1].boundary_t(self.psi),
                                self.diffs[1].x2(self.psi), self.diffs[1].x3(self.psi))
        dt = self.grid.dt
        out = []
        for j in range(self.order + 1):
            d = np.diff(res[:, : j + 1], n=j, axis=1) if j > 0 else res[:, :1]
            out.append(float(np.max(np.abs(d[:, 0]))) / dt ** j)
        return out


def total_pressure(U: np.ndarray) -> np.ndarray:
    U = np.asarray(U)
    return U[0] + 0.5 * np.sum(U[IDX_H] ** 2, axis=0)


def fill_outside_interior(u: np.ndarray) -> np.ndarray:
    """残差只在内部节点与第 0..nt−2 层有意义，其余行复制相邻值"""
    out = np.array(u, dtype=float, copy=True)
    out[..., -1, :, :, :] = out[..., -2, :, :, :]
    if out.shape[-3] > 2:
        out[..., 0, :, :] = out[..., 1, :, :]
        out[..., -1, :, :] = out[..., -2, :, :]
    return out


def build_zeroth_order(data: CompatData, grid: Grid, diffs: Dict[int, SchemeDiff],
                       cutoff_time: Optional[float] = None, delta: float = 0.0,
                       kappa_min: float = DEFAULT_KAPPA_MIN,
                       tol_parallel: float = DEFAULT_TOL_PARALLEL) -> ApproxSolution:
    """
    Taylor 和乘时间截断，再依次修复三组约束

    (i) U5 = ∂2Ψ_a U6 + ∂3Ψ_a U7；
    (ii) 在 x1 = 0 附近修正 U1⁻ 使总压跳跃为零；
    (iii) U2 = ∂tΨ_a + ∂2Ψ_a U3 + ∂3Ψ_a U4（∂t 为前沿型差分）。

    Args:
        data: 相容性数据
        grid: 含时间层的网格
        diffs: 各相格式算子
        cutoff_time: 时间截断的终止时刻，缺省为 grid.T

    Raises:
        FrontDegenerate: Ψ_a 违反 κ 下界
    """
    T = grid.T if cutoff_time is None else float(cutoff_time)
    t = grid.t
    chi_t = time_cutoff(t, T)
    Ua, Psi_a = {}, {}
    for s in SIGNS:
        U = np.broadcast_to(data.U[s][0][:, None], (N_COMPONENTS,) + grid.shape).copy()
        Psi = np.broadcast_to(data.Psi[s][0][None], grid.shape).copy()
        for j in range(1, data.order + 1):
            U += (chi_t * t ** j / math.factorial(j))[None, :, None, None, None] * data.U[s][j][:, None]
        for j in range(1, data.order + 2):
            Psi += (chi_t * t ** j / math.factorial(j))[:, None, None, None] * data.Psi[s][j][None]
        Ua[s], Psi_a[s] = U, Psi

    # 迹修正：两侧迹替换为平均值
    chi = x1_cutoff(grid.x1, cutoff_width(grid))[:, None, None]
    psi_a = 0.5 * (Psi_a[1][:, 0] + Psi_a[-1][:, 0])
    trace_fix = 0.0
    for s in SIGNS:
        gap = Psi_a[s][:, 0] - psi_a
        trace_fix = max(trace_fix, float(np.max(np.abs(gap))))
        Psi_a[s] = Psi_a[s] - chi[None] * gap[:, None]
        Psi_a[s][:, 0] = psi_a

    repairs = {"trace": trace_fix}
    for s in SIGNS:
        d = diffs[s]
        P2, P3 = d.x2(Psi_a[s]), d.x3(Psi_a[s])
        new5 = P2 * Ua[s][5] + P3 * Ua[s][6]
        repairs[f"normal_field{'+' if s > 0 else '-'}"] = float(np.max(np.abs(new5 - Ua[s][4])))
        Ua[s][4] = new5

    jump = total_pressure(Ua[1][:, :, 0]) - total_pressure(Ua[-1][:, :, 0])
    repairs["pressure_jump"] = float(np.max(np.abs(jump)))
    Ua[-1][0] += chi[None] * jump[:, None]

    for s in SIGNS:
        d = diffs[s]
        Psi = Psi_a[s]
        new2 = d.t(Psi, front=True) + d.x2(Psi) * Ua[s][2] + d.x3(Psi) * Ua[s][3]
        repairs[f"eikonal{'+' if s > 0 else '-'}"] = float(np.max(np.abs(new2 - Ua[s][1])))
        Ua[s][1] = new2

    front = FrontGeometry(psi_a, Psi_a[1], Psi_a[-1], grid)
    front.check(kappa_min, CentralDiff(grid))
    U_field = TwoPhaseField(Ua[1], Ua[-1], grid)
    lam = dict(zip(SIGNS, lambda_from_traces(U_field, tol_parallel)))
    f = {}
    for s in SIGNS:
        grads = front_gradients(Psi_a[s], diffs[s])
        f[s] = fill_outside_interior(-apply_L(Ua[s], grads, lam[s], data.eos, diffs[s]))
    approx = ApproxSolution(
        Ua=U_field,
        front=front,
        f_a=TwoPhaseField(f[1], f[-1], grid),
        lam=lam,
        diffs=diffs,
        eos=data.eos,
        order=data.order,
        delta=delta,
        repairs=repairs,
    )
    logger.info(f"零阶近似解: κ={front.kappa:.4f}, max|f_a|={approx.f_a.max_abs():.3e}, "
                f"修复量 {', '.join(f'{k}={v:.2e}' for k, v in repairs.items())}")
    return approx


# ===== 改写后的定边界问题 =====

class ReformulatedProblem:
    """
    V = U − U_a，Φ = Ψ − Ψ_a 满足的定边界问题

    非线性算子中的 λ± 冻结为 U_a 迹给出的值；ℒ 残差在内部节点上有意义。
    """

    def __init__(self, approx: ApproxSolution):
        self.approx = approx
        self.grid = approx.grid
        self.eos = approx.eos
        self.diffs = approx.diffs
        self.lam = approx.lam

    # 状态
    def state(self, V: TwoPhaseField) -> TwoPhaseField:
        return self.approx.Ua + V

    def lift(self, Phi: TwoPhaseField) -> TwoPhaseField:
        return self.approx.front.Psi + Phi

    def operator(self, sign: int, U: np.ndarray, Psi: np.ndarray) -> np.ndarray:
        """L(U,Ψ)U"""
        d = self.diffs[sign]
        return apply_L(U, front_gradients(Psi, d), self.lam[sign], self.eos, d)

    def nonlinear_residual(self, V: TwoPhaseField, Phi: TwoPhaseField) -> TwoPhaseField:
        """ℒ(V,Φ)V − f_a = L(U_a+V, Ψ_a+Φ)(U_a+V)"""
        U, Psi = self.state(V), self.lift(Phi)
        out = {s: fill_outside_interior(self.operator(s, U[s], Psi[s])) for s in SIGNS}
        return TwoPhaseField(out[1], out[-1], self.grid, V.vanishing_past)

    def interior(self, V: TwoPhaseField, Phi: TwoPhaseField) -> TwoPhaseField:
        """ℒ(V,Φ)V"""
        return self.nonlinear_residual(V, Phi) + self.approx.f_a

    def eikonal(self, V: TwoPhaseField, Phi: TwoPhaseField) -> TwoPhaseField:
        """ℰ(V,Φ) = ∂tΦ − V2 + ∂2(Ψ_a+Φ)V3 + ∂3(Ψ_a+Φ)V4 + U_a3∂2Φ + U_a4∂3Φ"""
        out = {}
        for s in SIGNS:
            d = self.diffs[s]
            Ua, Psi, v, phi = self.approx.Ua[s], self.approx.front[s], V[s], Phi[s]
            P = Psi + phi
            out[s] = (d.t(phi, front=True) - v[1] + d.x2(P) * v[2] + d.x3(P) * v[3]
                      + Ua[2] * d.x2(phi) + Ua[3] * d.x3(phi))
        return TwoPhaseField(out[1], out[-1], self.grid)

    def boundary(self, V: TwoPhaseField, phi: np.ndarray) -> np.ndarray:
        """ℬ(V⁺,V⁻,φ) = B(U_a⁺+V⁺, U_a⁻+V⁻, ψ_a+φ)"""
        d = self.diffs[1]
        psi = self.approx.psi + phi
        Up, Um = self.state(V).boundary()
        return boundary_operator(Up, Um, d.boundary_t(psi), d.x2(psi), d.x3(psi))

    # 线性化
    def L_prime(self, sign: int, U: np.ndarray, Psi: np.ndarray, dV: np.ndarray,
                dPhi: np.ndarray) -> np.ndarray:
        """L'_{(U,Ψ)}(δV, δΦ)，s 的中心差分"""
        scale = max(float(np.max(np.abs(dV))), float(np.max(np.abs(dPhi))))
        if scale == 0.0:
            return np.zeros_like(dV)
        eps = LINEARIZATION_REL_STEP / scale
        plus = self.operator(sign, U + eps * dV, Psi + eps * dPhi)
        minus = self.operator(sign, U - eps * dV, Psi - eps * dPhi)
        return fill_outside_interior((plus - minus) / (2.0 * eps))

    def E_prime(self, sign: int, Vb: np.ndarray, Phib: np.ndarray, W: np.ndarray,
                Theta: np.ndarray) -> np.ndarray:
        """ℰ'_{(V,Φ)}(W,Θ)"""
        d = self.diffs[sign]
        Ua, Psi = self.approx.Ua[sign], self.approx.front[sign]
        P = Psi + Phib
        return (d.t(Theta, front=True) - W[1] + d.x2(P) * W[2] + d.x3(P) * W[3]
                + (Ua[2] + Vb[2]) * d.x2(Theta) + (Ua[3] + Vb[3]) * d.x3(Theta))

    def B_prime(self, Ub: TwoPhaseField, psi_b: np.ndarray, dV: TwoPhaseField,
                dphi: np.ndarray) -> np.ndarray:
        """B'_{(U,ψ)}(δV⁺, δV⁻, δφ)，Ub 为完整状态"""
        d = self.diffs[1]
        psi2, psi3 = d.x2(psi_b), d.x3(psi_b)
        phit, phi2, phi3 = d.boundary_t(dphi), d.x2(dphi), d.x3(dphi)
        Up, Um = Ub.boundary()
        dp, dm = dV.boundary()

        def comp1(U, w):
            return phit - w[1] + psi2 * w[2] + psi3 * w[3] + phi2 * U[2] + phi3 * U[3]

        def comp2(U, w):
            return w[4] - psi2 * w[5] - psi3 * w[6] - phi2 * U[5] - phi3 * U[6]

        def dq(U, w):
            return w[0] + U[4] * w[4] + U[5] * w[5] + U[6] * w[6]

        return np.stack([comp1(Up, dp), comp1(Um, dm), comp2(Up, dp), comp2(Um, dm),
                         dq(Up, dp) - dq(Um, dm)])
