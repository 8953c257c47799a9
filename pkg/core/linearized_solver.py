"""
线性化求解器 - 好未知量、J/P 变换、解耦问题的显式求解与能量监测

记号：W 为好未知量 V − (Φ/∂1Ψ)∂1U，X = J⁻¹W，Y = P⁻¹X。
边界数据 h 的顺序为 (h1⁺, h1⁻, h2⁺, h2⁻, h3)，边界条件为

    ∂tφ − X2± + U3±∂2φ + U4±∂3φ = h1±
    X5± − U6±∂2φ − U7±∂3φ = h2±
    [X1] = h3

消去 φ 后得到 [X2 − λX5] = −[h1 + λh2]，λ± 由切向关系确定。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from config.constants import (
    DEFAULT_CFL,
    DEFAULT_KAPPA_MIN,
    DEFAULT_TOL_PARALLEL,
    LINEARIZATION_REL_STEP,
    N_COMPONENTS,
)
from core.differences import SchemeDiff
from core.eos_state import Eos, Grid, TwoPhaseField
from core.exceptions import (
    CflViolation,
    DegenerateConfiguration,
    FrontDegenerate,
    StabilityConditionError,
)
from core.function_spaces import AnisotropicNorm, boundary_norm
from core.geometry_transform import (
    SIGNS,
    FrontGeometry,
    FrontGradients,
    PhaseSpeeds,
    apply_L,
    cfl_rate,
    front_gradients,
    lambda_from_traces,
    lbar_matrices,
)
from core.mhd_system import apply_matrix, lambda_fields, stability_margin_field, symmetrize

logger = logging.getLogger(__name__)


def solve_points(A: np.ndarray, v: np.ndarray) -> np.ndarray:
    """逐点求解 A x = v，A 为 (..., 8, 8)，v 为 (8, ...)"""
    rhs = np.moveaxis(v, 0, -1)[..., None]
    return np.moveaxis(np.linalg.solve(A, rhs)[..., 0], -1, 0)


# ===== 好未知量与 J/P 变换 =====

def good_unknown(V: np.ndarray, Phi: np.ndarray, U: np.ndarray, Psi: np.ndarray, diff,
                 kappa_min: float = 0.0) -> np.ndarray:
    """W = V − (Φ/∂1Ψ)∂1U"""
    P1 = diff.x1(Psi)
    if kappa_min > 0 and np.any(np.abs(P1) < kappa_min):
        raise FrontDegenerate("|∂x1Ψ| 低于 κ_min", {"min": float(np.min(np.abs(P1)))})
    return np.asarray(V) - (np.asarray(Phi) / P1) * diff.x1(U)


def recover_from_good(W: np.ndarray, Phi: np.ndarray, U: np.ndarray, Psi: np.ndarray, diff,
                      kappa_min: float = 0.0) -> np.ndarray:
    """good_unknown 的逆：V = W + (Φ/∂1Ψ)∂1U"""
    P1 = diff.x1(Psi)
    if kappa_min > 0 and np.any(np.abs(P1) < kappa_min):
        raise FrontDegenerate("|∂x1Ψ| 低于 κ_min", {"min": float(np.min(np.abs(P1)))})
    return np.asarray(W) + (np.asarray(Phi) / P1) * diff.x1(U)


def j_transform(W: np.ndarray, U: np.ndarray, P2, P3) -> np.ndarray:
    """X = J⁻¹W"""
    W = np.asarray(W, dtype=float)
    X = W.copy()
    X[0] = W[0] + U[4] * W[4] + U[5] * W[5] + U[6] * W[6]
    X[1] = W[1] - P2 * W[2] - P3 * W[3]
    X[4] = W[4] - P2 * W[5] - P3 * W[6]
    return X


def j_inverse(X: np.ndarray, U: np.ndarray, P2, P3) -> np.ndarray:
    """W = J X"""
    X = np.asarray(X, dtype=float)
    W = X.copy()
    W[4] = X[4] + P2 * X[5] + P3 * X[6]
    W[1] = X[1] + P2 * X[2] + P3 * X[3]
    W[0] = X[0] - U[4] * W[4] - U[5] * X[5] - U[6] * X[6]
    return W


def j_matrix(U: np.ndarray, P2, P3) -> np.ndarray:
    """逐点矩阵 J（W = J X），形如 (..., 8, 8)"""
    U = np.asarray(U, dtype=float)
    shape = np.broadcast_shapes(U.shape[1:], np.shape(P2), np.shape(P3))
    J = np.zeros(shape + (N_COMPONENTS, N_COMPONENTS))
    J[..., np.arange(N_COMPONENTS), np.arange(N_COMPONENTS)] = 1.0
    J[..., 1, 2] = P2
    J[..., 1, 3] = P3
    J[..., 4, 5] = P2
    J[..., 4, 6] = P3
    J[..., 0, 4] = -U[4]
    J[..., 0, 5] = -(U[4] * P2 + U[5])
    J[..., 0, 6] = -(U[4] * P3 + U[6])
    return J


def p_matrix(lam) -> np.ndarray:
    """X = P Y，Y = (X1, X2 − λX5, X5, X3, X4, X6, X7, X8)"""
    lam = np.asarray(lam, dtype=float)
    P = np.zeros(lam.shape + (N_COMPONENTS, N_COMPONENTS))
    P[..., 0, 0] = 1.0
    P[..., 1, 1] = 1.0
    P[..., 1, 2] = lam
    P[..., 4, 2] = 1.0
    P[..., 2, 3] = 1.0
    P[..., 3, 4] = 1.0
    P[..., 5, 5] = 1.0
    P[..., 6, 6] = 1.0
    P[..., 7, 7] = 1.0
    return P


def p_inverse(X: np.ndarray, lam) -> np.ndarray:
    """Y = P⁻¹X"""
    X = np.asarray(X, dtype=float)
    return np.stack([X[0], X[1] - lam * X[4], X[4], X[2], X[3], X[5], X[6], X[7]])


# ===== 边界二次型 =====

class BoundaryForm(NamedTuple):
    form: np.ndarray        # Σ± ⟨|∂1Ψ|Ā1 W, W⟩
    decoupled: np.ndarray   # 2X1⁺[X2 − λX5]
    difference: np.ndarray


def boundary_quadratic_form(Xplus: np.ndarray, Xminus: np.ndarray, lam_plus, lam_minus,
                            Uplus: np.ndarray, Uminus: np.ndarray,
                            grads_plus: Sequence, grads_minus: Sequence, eos: Eos) -> BoundaryForm:
    """
    比较边界矩阵给出的二次型与解耦形式

    grads± 为边界点上的 (∂tΨ, ∂1Ψ, ∂2Ψ, ∂3Ψ)；X± 形如 (8, ...)。
    两者相等要求 [X1] = 0、程函关系与 U_{H,N} = 0 在该点成立。
    """
    total = 0.0
    for X, lam, U, g in ((Xplus, lam_plus, Uplus, grads_plus),
                         (Xminus, lam_minus, Uminus, grads_minus)):
        W = j_inverse(X, U, g[2], g[3])
        _, A1b, _, _ = lbar_matrices(U, g, lam, eos)
        total = total + np.abs(g[1]) * np.einsum("i...,i...->...", W, apply_matrix(A1b, W))
    Xp, Xm = np.asarray(Xplus), np.asarray(Xminus)
    decoupled = 2.0 * Xp[0] * ((Xp[1] - lam_plus * Xp[4]) - (Xm[1] - lam_minus * Xm[4]))
    return BoundaryForm(form=total, decoupled=decoupled, difference=total - decoupled)


# ===== 系数框架 =====

class GoodUnknownFrame:
    """
    冻结在基态 (U±, Ψ±) 上的线性化系数

    λ± 由基态迹计算并沿 x1 取常数；E·W 用系数矩阵沿 W 的中心差分给出
    （λ 冻结，步长 1e-6/max|W|），包含 A0 项。
    """

    def __init__(self, U: TwoPhaseField, front: FrontGeometry, eos: Eos,
                 diffs: Dict[int, SchemeDiff], tol_parallel: float = DEFAULT_TOL_PARALLEL,
                 kappa_min: float = DEFAULT_KAPPA_MIN):
        self.U = U
        self.front = front
        self.eos = eos
        self.diffs = diffs
        self.grid = U.grid
        self.kappa_min = kappa_min
        self.grads: Dict[int, FrontGradients] = {
            sign: front_gradients(front[sign], diffs[sign]) for sign in SIGNS}
        self.lam = dict(zip(SIGNS, lambda_from_traces(U, tol_parallel)))

        for sign in SIGNS:
            margin = stability_margin_field(U[sign], self.lam[sign], eos)
            if np.min(margin) <= 0:
                raise StabilityConditionError("λ 违反声速界",
                                              {"phase": sign, "min_margin": float(np.min(margin))})
        self.kappa = min(float(np.min(sign * self.grads[sign].x1)) for sign in SIGNS)
        if self.kappa < kappa_min:
            raise FrontDegenerate("基态前沿违反 κ 下界", {"kappa": self.kappa, "kappa_min": kappa_min})

        self.dU = {sign: (diffs[sign].t(U[sign]), diffs[sign].x1(U[sign]),
                          diffs[sign].x2(U[sign]), diffs[sign].x3(U[sign])) for sign in SIGNS}
        logger.debug(f"线性化框架: κ={self.kappa:.4f}, "
                     f"λ⁺∈[{np.min(self.lam[1]):.4f}, {np.max(self.lam[1]):.4f}], "
                     f"λ⁻∈[{np.min(self.lam[-1]):.4f}, {np.max(self.lam[-1]):.4f}]")

    def level_grads(self, sign: int, m: int, node: Optional[int] = None) -> List[np.ndarray]:
        g = self.grads[sign]
        if node is None:
            return [g.t[m], g.x1[m], g.x2[m], g.x3[m]]
        return [g.t[m, node], g.x1[m, node], g.x2[m, node], g.x3[m, node]]

    def matrices(self, sign: int, m: int, state: Optional[np.ndarray] = None):
        """第 m 层的 (A0, Ā1, A2, A3)"""
        U = self.U[sign][:, m] if state is None else state
        return lbar_matrices(U, self.level_grads(sign, m), self.lam[sign][m], self.eos)

    def boundary_matrices(self, sign: int, m: int):
        U = self.U[sign][:, m, 0]
        return lbar_matrices(U, self.level_grads(sign, m, 0), self.lam[sign][m, 0], self.eos)

    def _coefficient_action(self, sign: int, m: int, state: np.ndarray) -> np.ndarray:
        A0, A1b, A2, A3 = self.matrices(sign, m, state)
        dU = self.dU[sign]
        return (apply_matrix(A0, dU[0][:, m]) + apply_matrix(A1b, dU[1][:, m])
                + apply_matrix(A2, dU[2][:, m]) + apply_matrix(A3, dU[3][:, m]))

    def apply_E_level(self, sign: int, m: int, W: np.ndarray) -> np.ndarray:
        """E(U,Ψ)W 在第 m 层"""
        scale = float(np.max(np.abs(W)))
        if scale == 0.0:
            return np.zeros_like(W)
        eps = LINEARIZATION_REL_STEP / scale
        U = self.U[sign][:, m]
        plus = self._coefficient_action(sign, m, U + eps * W)
        minus = self._coefficient_action(sign, m, U - eps * W)
        return (plus - minus) / (2.0 * eps)

    def apply_E(self, sign: int, W: np.ndarray) -> np.ndarray:
        return np.stack([self.apply_E_level(sign, m, W[:, m]) for m in range(W.shape[1])], axis=1)

    def apply_L(self, sign: int, W: np.ndarray) -> np.ndarray:
        return apply_L(self.U[sign], self.grads[sign], self.lam[sign], self.eos,
                       self.diffs[sign], V=W)

    def residual(self, sign: int, W: np.ndarray, F: np.ndarray) -> np.ndarray:
        """L W + E W − F"""
        return self.apply_L(sign, W) + self.apply_E(sign, W) - F

    def to_X(self, sign: int, W: np.ndarray) -> np.ndarray:
        g = self.grads[sign]
        return j_transform(W, self.U[sign], g.x2, g.x3)

    def to_W(self, sign: int, X: np.ndarray) -> np.ndarray:
        g = self.grads[sign]
        return j_inverse(X, self.U[sign], g.x2, g.x3)

    def j_condition(self) -> float:
        """J 在所有格点上的最大条件数"""
        worst = 1.0
        for sign in SIGNS:
            g = self.grads[sign]
            J = j_matrix(self.U[sign][:, 0], g.x2[0], g.x3[0])
            worst = max(worst, float(np.max(np.linalg.cond(J))))
        return worst


class BlockReport(NamedTuple):
    a11_deviation: float
    a12_deviation: float
    a22_deviation: float
    hypotheses_ok: bool
    eikonal_residual: float
    normal_field_residual: float

    @property
    def max_deviation(self) -> float:
        return max(self.a11_deviation, self.a12_deviation, self.a22_deviation)


def p_transform_check(frame: GoodUnknownFrame, levels: Optional[Sequence[int]] = None,
                      tol: float = 1e-10) -> BlockReport:
    """
    检查 ∂1Ψ·PᵀJᵀĀ1JP 在 x1 = 0 上的分块结构

    期望 A11 = [[0,1],[1,0]]，其余块为零；前提不满足时只报告，不断言。
    """
    levels = range(frame.grid.nt - 1) if levels is None else levels
    target = np.array([[0.0, 1.0], [1.0, 0.0]])
    dev = [0.0, 0.0, 0.0]
    eik_res = 0.0
    hn_res = 0.0
    for sign in SIGNS:
        for m in levels:
            U = frame.U[sign][:, m, 0]
            Pt, P1, P2, P3 = frame.level_grads(sign, m, 0)
            _, A1b, _, _ = frame.boundary_matrices(sign, m)
            J = j_matrix(U, P2, P3)
            P = p_matrix(frame.lam[sign][m, 0])
            JP = J @ P
            M = P1[..., None, None] * (np.swapaxes(JP, -1, -2) @ A1b @ JP)
            dev[0] = max(dev[0], float(np.max(np.abs(M[..., :2, :2] - target))))
            dev[1] = max(dev[1], float(np.max(np.abs(M[..., :2, 2:]))),
                         float(np.max(np.abs(M[..., 2:, :2]))))
            dev[2] = max(dev[2], float(np.max(np.abs(M[..., 2:, 2:]))))
            eik_res = max(eik_res, float(np.max(np.abs(Pt - (U[1] - U[2] * P2 - U[3] * P3)))))
            hn_res = max(hn_res, float(np.max(np.abs(U[4] - P2 * U[5] - P3 * U[6]))))
    ok = eik_res <= tol and hn_res <= tol
    if not ok:
        logger.debug(f"P 变换前提不满足: 程函残差={eik_res:.3e}, U_HN 残差={hn_res:.3e}")
    return BlockReport(*dev, hypotheses_ok=ok, eikonal_residual=eik_res, normal_field_residual=hn_res)


# ===== 解耦问题求解 =====

@dataclass
class LinearSolveReport:
    """线性求解结果"""
    W: TwoPhaseField
    X: TwoPhaseField
    phi: np.ndarray
    gap: np.ndarray             # 两侧 φ 方程右端之差（由边界条件给出的切向导数）
    gap_fd: np.ndarray          # 同上，切向导数改用 φ 的差分
    bc_residual: float
    courant: float
    energy: np.ndarray          # 每层 ‖X(t)‖₀

    @property
    def max_gap(self) -> float:
        return float(np.max(np.abs(self.gap)))

    @property
    def max_gap_fd(self) -> float:
        return float(np.max(np.abs(self.gap_fd)))

    def Y(self, frame: GoodUnknownFrame) -> TwoPhaseField:
        return TwoPhaseField(p_inverse(self.X.plus, frame.lam[1]),
                             p_inverse(self.X.minus, frame.lam[-1]), self.X.grid)


def _incoming_vectors(A0: np.ndarray, A1b: np.ndarray) -> np.ndarray:
    """最大广义特征值 Ā1 r = ν A0 r 对应的特征向量，形如 (8, ...)"""
    L = np.linalg.cholesky(A0)
    Linv = np.linalg.inv(L)
    M = symmetrize(Linv @ A1b @ np.swapaxes(Linv, -1, -2))
    _, vecs = np.linalg.eigh(M)
    y = vecs[..., :, -1]
    r = np.einsum("...ji,...j->...i", Linv, y)
    return np.moveaxis(r, -1, 0)


def _ell(W: np.ndarray, U: np.ndarray, P2, P3, lam):
    """ℓ1 = X1，ℓ2 = X2 − λX5"""
    X = j_transform(W, U, P2, P3)
    return X[0], X[1] - lam * X[4]


def _front_rhs(X: Dict[int, np.ndarray], U: Dict[int, np.ndarray], h: np.ndarray,
               det_guard: float = 1e-14):
    """
    由 X 在边界上的值求 (∂2φ, ∂3φ) 与两侧 φ 方程右端

    h 为该层的 (h1⁺, h1⁻, h2⁺, h2⁻, h3)。
    """
    Up, Um = U[1], U[-1]
    a11, a12, a21, a22 = Up[5], Up[6], Um[5], Um[6]
    det = a11 * a22 - a12 * a21
    if np.any(np.abs(det) <= det_guard):
        raise DegenerateConfiguration("前沿方程中的切向磁场矩阵奇异",
                                      {"min_det": float(np.min(np.abs(det)))})
    b1 = X[1][4] - h[2]
    b2 = X[-1][4] - h[3]
    phi2 = (a22 * b1 - a12 * b2) / det
    phi3 = (a11 * b2 - a21 * b1) / det
    rhs_p = X[1][1] - Up[2] * phi2 - Up[3] * phi3 + h[0]
    rhs_m = X[-1][1] - Um[2] * phi2 - Um[3] * phi3 + h[1]
    return phi2, phi3, rhs_p, rhs_m


def solve_linearized(frame: GoodUnknownFrame, F: TwoPhaseField, h: np.ndarray,
                     initial: Optional[Dict[int, np.ndarray]] = None,
                     cfl: float = DEFAULT_CFL) -> LinearSolveReport:
    """
    显式求解 L W + E W = F 与边界条件、前沿方程

    内部为前向 Euler + Rusanov 耗散（x1 = 0 处单侧差分且无 x1 耗散），远端零阶外推。
    每层先由第 m 层数据推进 φ（含前沿型切向耗散），再推进 W，最后在 x1 = 0 上沿入射特征向量修正
    两侧的值使 [X1] = h3、[X2 − λX5] = −[h1 + λh2] 成立。

    Args:
        frame: 线性化系数框架
        F: 内部强迫项
        h: 边界数据 (5, nt, n2, n3)
        initial: 可选，在 t = dt 层注入的初值（稳定性检验用）
        cfl: CFL 数上限，仅用于告警

    Raises:
        CflViolation: 库朗数超过 1
        DegenerateConfiguration: 切向磁场矩阵奇异
    """
    grid = frame.grid
    nt, dt = grid.nt, grid.dt
    speeds = {sign: PhaseSpeeds(d.alpha, d.beta) for sign, d in frame.diffs.items()}
    courant = dt * cfl_rate(grid, speeds)
    if courant > 1.0:
        raise CflViolation("库朗数超过 1", {"courant": courant, "dt": dt})
    if courant > cfl:
        logger.warning(f"库朗数 {courant:.3f} 超过配置的 CFL 数 {cfl}")

    h = np.asarray(h, dtype=float)
    W = {sign: np.zeros((N_COMPONENTS,) + grid.shape) for sign in SIGNS}
    phi = np.zeros(grid.boundary_shape)
    gap = np.zeros(nt)
    gap_fd = np.zeros(nt)
    bc_res = 0.0
    diff_any = frame.diffs[1]

    def h_at(m: int) -> np.ndarray:
        return h[:, m]

    def boundary_X(m: int) -> Dict[int, np.ndarray]:
        out = {}
        for sign in SIGNS:
            g = frame.grads[sign]
            out[sign] = j_transform(W[sign][:, m, 0], frame.U[sign][:, m, 0], g.x2[m, 0], g.x3[m, 0])
        return out

    def record_gap(m: int):
        Ub = {sign: frame.U[sign][:, m, 0] for sign in SIGNS}
        Xb = boundary_X(m)
        hm = h_at(m)
        _, _, rp, rm = _front_rhs(Xb, Ub, hm)
        gap[m] = float(np.max(np.abs(rp - rm)))
        d2, d3 = diff_any.x2(phi[m]), diff_any.x3(phi[m])
        fd_p = Xb[1][1] - Ub[1][2] * d2 - Ub[1][3] * d3 + hm[0]
        fd_m = Xb[-1][1] - Ub[-1][2] * d2 - Ub[-1][3] * d3 + hm[1]
        gap_fd[m] = float(np.max(np.abs(fd_p - fd_m)))
        return rp, rm

    for m in range(nt - 1):
        # 前沿：第 m 层右端的平均
        rp, rm = record_gap(m)
        phi[m + 1] = phi[m] + dt * (0.5 * (rp + rm) + diff_any.dissipation(phi[m][None], front=True)[0])

        # 内部推进
        for sign in SIGNS:
            diff = frame.diffs[sign]
            Wm = W[sign][:, m]
            A0, A1b, A2, A3 = frame.matrices(sign, m)
            rhs = (F[sign][:, m] - apply_matrix(A1b, diff.x1(Wm)) - apply_matrix(A2, diff.x2(Wm))
                   - apply_matrix(A3, diff.x3(Wm)) - frame.apply_E_level(sign, m, Wm))
            W[sign][:, m + 1] = Wm + dt * (diff.dissipation(Wm) + solve_points(A0, rhs))
            W[sign][:, m + 1, -1] = W[sign][:, m + 1, -2]
            if initial is not None and m == 0:
                W[sign][:, 1] += initial[sign]

        # x1 = 0 上的两个跳跃条件
        hm = h_at(m + 1)
        r, l1r, l2r, l1w, l2w = {}, {}, {}, {}, {}
        for sign in SIGNS:
            g = frame.grads[sign]
            Ubd = frame.U[sign][:, m + 1, 0]
            A0b, A1bb, _, _ = frame.boundary_matrices(sign, m + 1)
            r[sign] = _incoming_vectors(A0b, A1bb)
            lam_b = frame.lam[sign][m + 1, 0]
            l1r[sign], l2r[sign] = _ell(r[sign], Ubd, g.x2[m + 1, 0], g.x3[m + 1, 0], lam_b)
            l1w[sign], l2w[sign] = _ell(W[sign][:, m + 1, 0], Ubd, g.x2[m + 1, 0], g.x3[m + 1, 0], lam_b)
        lam_p, lam_m = frame.lam[1][m + 1, 0], frame.lam[-1][m + 1, 0]
        c1 = hm[4] - (l1w[1] - l1w[-1])
        c2 = -((hm[0] + lam_p * hm[2]) - (hm[1] + lam_m * hm[3])) - (l2w[1] - l2w[-1])
        m11, m12, m21, m22 = l1r[1], -l1r[-1], l2r[1], -l2r[-1]
        det = m11 * m22 - m12 * m21
        if np.any(np.abs(det) < 1e-14):
            raise DegenerateConfiguration("边界条件的 2×2 系统奇异", {"min_det": float(np.min(np.abs(det)))})
        beta_p = (m22 * c1 - m12 * c2) / det
        beta_m = (m11 * c2 - m21 * c1) / det
        W[1][:, m + 1, 0] += beta_p * r[1]
        W[-1][:, m + 1, 0] += beta_m * r[-1]

        Xb = boundary_X(m + 1)
        res1 = (Xb[1][0] - Xb[-1][0]) - hm[4]
        res2 = ((Xb[1][1] - lam_p * Xb[1][4]) - (Xb[-1][1] - lam_m * Xb[-1][4])
                + (hm[0] + lam_p * hm[2]) - (hm[1] + lam_m * hm[3]))
        bc_res = max(bc_res, float(np.max(np.abs(res1))), float(np.max(np.abs(res2))))
        logger.debug(f"线性求解 第 {m + 1}/{nt - 1} 层: 边界残差={bc_res:.2e}")
    record_gap(nt - 1)

    X = TwoPhaseField(frame.to_X(1, W[1]), frame.to_X(-1, W[-1]), grid, vanishing_past=True)
    norm0 = AnisotropicNorm(grid, 0, 0.0)
    energy = np.sqrt(norm0.per_slice(X.plus, 0) ** 2 + norm0.per_slice(X.minus, 0) ** 2)
    return LinearSolveReport(
        W=TwoPhaseField(W[1], W[-1], grid, vanishing_past=True),
        X=X,
        phi=phi,
        gap=gap,
        gap_fd=gap_fd,
        bc_residual=bc_res,
        courant=courant,
        energy=energy,
    )


# ===== 能量估计 =====

@dataclass
class EnergyReport:
    """能量估计中的测量常数 C0(μ)"""
    s: int
    mu: List[float]
    lhs: List[float]
    rhs_core: List[float]
    c0: List[float]
    vacuous: bool = False

    @property
    def drift(self) -> float:
        if self.vacuous:
            return 1.0
        values = [c for c in self.c0 if c > 0]
        return max(values) / min(values) if values else 1.0

    def rows(self) -> List[Dict[str, float]]:
        return [{"s": self.s, "mu": mu, "lhs": lhs, "rhs_core": rhs, "C0": c0}
                for mu, lhs, rhs, c0 in zip(self.mu, self.lhs, self.rhs_core, self.c0)]


def energy_report(report: LinearSolveReport, F: TwoPhaseField, h: np.ndarray, s: int,
                  mu_list: Sequence[float]) -> EnergyReport:
    """
    LHS = max_t‖X(t)‖²_{s,μ} + μ‖X‖²_{s,μ,T}，C0(μ) = LHS·μ/(‖F‖²_{s,μ,T} + ‖h‖²_{H^{s+1}_μ})

    数据全为零时返回 vacuous。
    """
    grid = report.X.grid
    lhs_list, rhs_list, c0_list = [], [], []
    vacuous = F.max_abs() == 0.0 and float(np.max(np.abs(h))) == 0.0
    for mu in mu_list:
        norm = AnisotropicNorm(grid, s, mu)
        slices = norm.per_slice(report.X.plus, s) ** 2 + norm.per_slice(report.X.minus, s) ** 2
        total = norm(report.X.plus) ** 2 + norm(report.X.minus) ** 2
        lhs = float(np.max(slices)) + mu * total
        rhs = (norm(F.plus) ** 2 + norm(F.minus) ** 2
               + boundary_norm(h, grid, s + 1, mu) ** 2)
        lhs_list.append(lhs)
        rhs_list.append(rhs)
        c0_list.append(lhs * mu / rhs if rhs > 0 else 0.0)
    if vacuous:
        logger.info("能量估计: 数据为零，结果为 vacuous")
    return EnergyReport(s=s, mu=list(mu_list), lhs=lhs_list, rhs_core=rhs_list, c0=c0_list,
                        vacuous=vacuous)


# ===== 线性化恒等式检验 =====

class LinearizationCheck(NamedTuple):
    steps: Tuple[float, ...]
    errors: Tuple[float, ...]
    slope: float


def linearization_check(U: np.ndarray, Psi: np.ndarray, V: np.ndarray, Phi: np.ndarray, lam,
                        eos: Eos, diff, steps: Sequence[float] = (0.08, 0.04, 0.02, 0.01),
                        x1_slope: float = 0.0) -> LinearizationCheck:
    """
    d/ds L(U+sV, Ψ+sΦ)(U+sV)|₀ = L W + E W + (Φ/∂1Ψ)∂1(L(U,Ψ)U)

    左端用 s 的中心差分，误差随 s 的对数斜率应接近 2。
    周期盒子上 Psi 只传周期部分，∂1Ψ 另加常数 x1_slope。
    """
    def gradients(P):
        g = front_gradients(P, diff)
        return g._replace(x1=g.x1 + x1_slope)

    def N(s):
        return apply_L(U + s * V, gradients(Psi + s * Phi), lam, eos, diff)

    grads = gradients(Psi)
    W = np.asarray(V) - (np.asarray(Phi) / grads.x1) * diff.x1(U)
    LW = apply_L(U, grads, lam, eos, diff, V=W)
    dU = (diff.t(U), diff.x1(U), diff.x2(U), diff.x3(U))
    lam_b = np.broadcast_to(np.asarray(lam, dtype=float), U.shape[1:])

    def action(state):
        out = np.empty_like(U)
        for m in range(U.shape[1]):
            A0, A1b, A2, A3 = lbar_matrices(state[:, m], [g[m] for g in grads], lam_b[m], eos)
            out[:, m] = (apply_matrix(A0, dU[0][:, m]) + apply_matrix(A1b, dU[1][:, m])
                         + apply_matrix(A2, dU[2][:, m]) + apply_matrix(A3, dU[3][:, m]))
        return out

    eps = LINEARIZATION_REL_STEP / max(float(np.max(np.abs(W))), 1e-300)
    EW = (action(U + eps * W) - action(U - eps * W)) / (2.0 * eps)
    LU = apply_L(U, grads, lam, eos, diff)
    predicted = LW + EW + (Phi / grads.x1) * diff.x1(LU)

    errors = []
    for s in steps:
        fd = (N(s) - N(-s)) / (2.0 * s)
        errors.append(float(np.max(np.abs(fd - predicted))))
    slope = float(np.polyfit(np.log(steps), np.log(np.maximum(errors, 1e-300)), 1)[0])
    return LinearizationCheck(tuple(steps), tuple(errors), slope)


# ===== 非线性推进 =====

@dataclass
class NonlinearRun:
    U: Dict[int, np.ndarray]
    Psi: Dict[int, np.ndarray]
    grid: Grid


def evolve_nonlinear(U0: Dict[int, np.ndarray], Psi0: Dict[int, np.ndarray], grid: Grid, eos: Eos,
                     diffs: Dict[int, SchemeDiff], lam: Optional[float] = None,
                     use_front: bool = True, tol_parallel: float = DEFAULT_TOL_PARALLEL,
                     kappa_min: float = DEFAULT_KAPPA_MIN) -> NonlinearRun:
    """
    Rusanov 格式推进 L(U,Ψ)U = 0，并用程函方程推进 Ψ

    x1 = 0 处不施加边界条件（单侧差分），适用于常数态、光滑数据或全周期盒子。
    use_front=False 时前沿固定为平面 Ψ± = ±x1（梯度取解析值，可用于 x1 周期的盒子）。lam 为 None 时每层由两相迹计算 λ±。

    Args:
        U0: 各相初始时刻状态 (8, n1+1, n2, n3)
        Psi0: 各相初始提升 (n1+1, n2, n3)
    """
    signs = sorted(U0, reverse=True)
    nt, dt = grid.nt, grid.dt
    U = {s: np.empty((N_COMPONENTS,) + grid.shape) for s in signs}
    Psi = {s: np.empty(grid.shape) for s in signs}
    for s in signs:
        U[s][:, 0] = U0[s]
        Psi[s][0] = Psi0[s]

    for m in range(nt - 1):
        if lam is None:
            pair = lambda_fields(U[1][:, m, 0], U[-1][:, m, 0], tol_parallel)
            lam_level = {1: pair.lambda_plus[None], -1: pair.lambda_minus[None]}
        else:
            lam_level = {s: lam for s in signs}
        for s in signs:
            diff = diffs[s]
            Um, Pm = U[s][:, m], Psi[s][m]
            if use_front:
                P1, P2, P3 = diff.x1(Pm), diff.x2(Pm), diff.x3(Pm)
                Pt = Um[1] - Um[2] * P2 - Um[3] * P3
                if np.min(s * P1) < kappa_min:
                    raise FrontDegenerate("非线性推进中速端变换失效", {"step": m})
            else:
                P1 = np.full_like(Pm, float(s))
                Pt = P2 = P3 = np.zeros_like(Pm)
            lam_m = np.broadcast_to(np.asarray(lam_level[s], dtype=float), Pm.shape)
            A0, A1b, A2, A3 = lbar_matrices(Um, (Pt, P1, P2, P3), lam_m, eos)
            rhs = -(apply_matrix(A1b, diff.x1(Um)) + apply_matrix(A2, diff.x2(Um))
                    + apply_matrix(A3, diff.x3(Um)))
            U[s][:, m + 1] = Um + dt * (diff.dissipation(Um) + solve_points(A0, rhs))
            if use_front:
                Psi[s][m + 1] = Pm + dt * (Pt + diff.dissipation(Pm, front=True))
            else:
                Psi[s][m + 1] = Pm
            if not grid.periodic_x1:
                U[s][:, m + 1, -1] = U[s][:, m + 1, -2]
    return NonlinearRun(U=U, Psi=Psi, grid=grid)
