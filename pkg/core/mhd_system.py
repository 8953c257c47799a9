"""
MHD 对称双曲系统 - 原始系统与散度增广系统的系数矩阵、λ± 求解、跳跃条件残差

矩阵按"点在前"存放：场上的矩阵形如 (..., 8, 8)，与形如 (8, ...) 的向量场
通过 apply_matrix 相乘。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, NamedTuple, Tuple

import numpy as np

from config.constants import DEFAULT_TOL_PARALLEL, IDX_H, IDX_P, IDX_V, N_COMPONENTS
from core.eos_state import Eos, MhdState, TwoPhaseField, derived_fields
from core.exceptions import DegenerateConfiguration, DomainError, StabilityConditionError

logger = logging.getLogger(__name__)

Matrices = Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]


def apply_matrix(M: np.ndarray, V: np.ndarray) -> np.ndarray:
    """(..., 8, 8) 矩阵场作用于 (8, ...) 向量场"""
    return np.einsum("...ij,j...->i...", M, V)


def symmetrize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def _state_vector(U) -> np.ndarray:
    if isinstance(U, MhdState):
        return U.as_vector()
    return np.asarray(U, dtype=float)


def primitive_matrices(U: np.ndarray, eos: Eos) -> Matrices:
    """
    拟线性形式的 B0..B3

    B0 = diag(1/(ρc²), ρI, I, 1)；B_j 使 B0∂tU + ΣB_j∂_jU 与原始变量方程逐项一致。
    """
    U = np.asarray(U, dtype=float)
    shape = U.shape[1:]
    d = derived_fields(U, eos)
    rho, rc2 = d.rho, d.rho * d.c2
    v, H = U[IDX_V], U[IDX_H]

    B0 = np.zeros(shape + (N_COMPONENTS, N_COMPONENTS))
    B0[..., 0, 0] = 1.0 / rc2
    for i in range(3):
        B0[..., 1 + i, 1 + i] = rho
        B0[..., 4 + i, 4 + i] = 1.0
    B0[..., 7, 7] = 1.0

    spatial = []
    for j in range(3):
        B = np.zeros_like(B0)
        B[..., 0, 0] = v[j] / rc2
        B[..., 0, 1 + j] = 1.0
        B[..., 1 + j, 0] = 1.0
        for i in range(3):
            B[..., 1 + i, 1 + i] = rho * v[j]
            B[..., 4 + i, 4 + i] = v[j]
            for k in range(3):
                # 动量方程中 ∂_j(|H|²/2)δ_ij − H_j∂_jH_i 的系数
                m = (H[k] if i == j else 0.0) - (H[j] if i == k else 0.0)
                B[..., 1 + i, 4 + k] = m
                B[..., 4 + k, 1 + i] = m
        B[..., 7, 7] = v[j]
        spatial.append(B)
    return (B0, *spatial)


def d_matrix(U: np.ndarray, lam, eos: Eos) -> np.ndarray:
    """增广变换矩阵 D(λ, U) = diag(D̃(λ, U), 1)"""
    U = np.asarray(U, dtype=float)
    shape = U.shape[1:]
    lam = np.broadcast_to(np.asarray(lam, dtype=float), shape)
    d = derived_fields(U, eos)
    rho, rc2 = d.rho, d.rho * d.c2
    H = U[IDX_H]

    D = np.zeros(shape + (N_COMPONENTS, N_COMPONENTS))
    D[..., 0, 0] = 1.0
    D[..., 7, 7] = 1.0
    for i in range(3):
        D[..., 0, 1 + i] = lam * H[i] / rc2
        D[..., 1 + i, 0] = lam * rho * H[i]
        D[..., 1 + i, 1 + i] = 1.0
        D[..., 1 + i, 4 + i] = -rho * lam
        D[..., 4 + i, 1 + i] = -lam
        D[..., 4 + i, 4 + i] = 1.0
    return D


def augmented_matrices(U: np.ndarray, lam, eos: Eos) -> Matrices:
    """
    散度增广系统的 A0..A3

    A0 = D·B0，A_j = D·B_j + λ·G·e_{H_j}ᵀ，其中 G = −(1, 0, 0, 0, H, 0)ᵀ。
    ∇·H 项并入空间系数，因此系统保持 A0∂t + ΣA_j∂_j 的形式。
    """
    U = np.asarray(U, dtype=float)
    shape = U.shape[1:]
    lam = np.broadcast_to(np.asarray(lam, dtype=float), shape)
    B0, B1, B2, B3 = primitive_matrices(U, eos)
    D = d_matrix(U, lam, eos)
    H = U[IDX_H]

    A0 = symmetrize(D @ B0)
    out = [A0]
    for j, B in enumerate((B1, B2, B3)):
        A = D @ B
        A[..., 0, 4 + j] -= lam
        for i in range(3):
            A[..., 4 + i, 4 + j] -= lam * H[i]
        out.append(symmetrize(A))
    return tuple(out)


def characteristic_speeds(A: np.ndarray, A0: np.ndarray) -> np.ndarray:
    """广义特征值 A x = ν A0 x（逐点，升序）"""
    L = np.linalg.cholesky(A0)
    Linv = np.linalg.inv(L)
    M = Linv @ A @ np.swapaxes(Linv, -1, -2)
    return np.linalg.eigvalsh(symmetrize(M))


@dataclass(frozen=True)
class SymmetricSystem:
    """单点的系数矩阵组"""
    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    A3: np.ndarray
    augmented: bool = False

    @property
    def matrices(self) -> Matrices:
        return self.A0, self.A1, self.A2, self.A3

    def max_asymmetry(self) -> float:
        """max_j |A_j − A_jᵀ| / max|A_j|"""
        worst = 0.0
        for A in self.matrices:
            scale = max(float(np.max(np.abs(A))), 1e-300)
            worst = max(worst, float(np.max(np.abs(A - A.T))) / scale)
        return worst

    def min_eig_A0(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.A0)))


def assemble_primitive(U: MhdState) -> SymmetricSystem:
    """单点原始系统 B0..B3"""
    return SymmetricSystem(*primitive_matrices(U.as_vector(), U.eos), augmented=False)


def assemble_augmented(U: MhdState, lam: float) -> SymmetricSystem:
    """
    单点增广系统 A0..A3

    Raises:
        StabilityConditionError: λ² 不小于 c²/(ρc²+|H|²)，或 A0 非正定
    """
    margin = stability_margin(U, lam)
    if margin <= 0.0:
        raise StabilityConditionError("λ 违反声速界，A0 失去正定性",
                                      {"lambda": lam, "margin": margin})
    system = SymmetricSystem(*augmented_matrices(U.as_vector(), lam, U.eos), augmented=True)
    min_eig = system.min_eig_A0()
    if min_eig <= 0.0:
        raise StabilityConditionError("A0 非正定", {"lambda": lam, "min_eig": min_eig})
    return system


def stability_margin(U: MhdState, lam: float) -> float:
    """c²/(ρc²+|H|²) − λ²"""
    return U.sonic_bound - float(lam) ** 2


def stability_margin_field(U: np.ndarray, lam, eos: Eos) -> np.ndarray:
    """stability_margin 的场版本"""
    d = derived_fields(U, eos)
    H2 = np.sum(np.asarray(U)[IDX_H] ** 2, axis=0)
    return d.c2 / (d.rho * d.c2 + H2) - np.asarray(lam) ** 2


class LambdaPair(NamedTuple):
    lambda_plus: np.ndarray
    lambda_minus: np.ndarray
    det_tau: np.ndarray

    def residual(self, Uplus, Uminus) -> np.ndarray:
        """(v2,v3)⁺ − (v2,v3)⁻ − λ⁺(H2,H3)⁺ + λ⁻(H2,H3)⁻"""
        Up, Um = _state_vector(Uplus), _state_vector(Uminus)
        dv = Up[2:4] - Um[2:4]
        return dv - self.lambda_plus * Up[5:7] + self.lambda_minus * Um[5:7]


def lambda_fields(Uplus: np.ndarray, Uminus: np.ndarray,
                  tol_parallel: float = DEFAULT_TOL_PARALLEL) -> LambdaPair:
    """
    逐点求解 Δ(v2,v3) = λ⁺(H2,H3)⁺ − λ⁻(H2,H3)⁻

    Args:
        Uplus, Uminus: 形如 (8, ...) 的两侧状态（通常为 x1 = 0 上的迹）
        tol_parallel: 相对退化容差，|det| ≤ tol·|H_τ⁺||H_τ⁻| 视为平行

    Raises:
        DegenerateConfiguration: 切向磁场平行（违反非平行条件）
    """
    Up, Um = np.asarray(Uplus, dtype=float), np.asarray(Uminus, dtype=float)
    h2p, h3p, h2m, h3m = Up[5], Up[6], Um[5], Um[6]
    dv2, dv3 = Up[2] - Um[2], Up[3] - Um[3]
    det = h2p * h3m - h3p * h2m
    scale = np.hypot(h2p, h3p) * np.hypot(h2m, h3m)
    degenerate = np.abs(det) <= tol_parallel * scale
    if np.any(degenerate):
        raise DegenerateConfiguration(
            "切向磁场 (H2,H3)⁺ 与 (H2,H3)⁻ 平行，违反非平行条件",
            {"min_det": float(np.min(np.abs(det))), "points": int(np.count_nonzero(degenerate))})
    lam_p = (dv2 * h3m - dv3 * h2m) / det
    lam_m = (h3p * dv2 - h2p * dv3) / det
    return LambdaPair(lam_p, lam_m, det)


def lambda_pair(Uplus: MhdState, Uminus: MhdState,
                tol_parallel: float = DEFAULT_TOL_PARALLEL) -> LambdaPair:
    """单点 λ±"""
    pair = lambda_fields(Uplus.as_vector(), Uminus.as_vector(), tol_parallel)
    return LambdaPair(float(pair.lambda_plus), float(pair.lambda_minus), float(pair.det_tau))


RH_COMPONENTS = ("mass", "normal_field", "momentum_normal", "momentum_tau2",
                 "momentum_tau3", "induction1", "induction2", "induction3", "energy")


@dataclass(frozen=True)
class RhResidual:
    """Rankine-Hugoniot 残差"""
    components: np.ndarray      # 9 个分量，顺序见 RH_COMPONENTS
    contact: np.ndarray         # (ψt − v_N⁺, ψt − v_N⁻, H_N⁺, H_N⁻, [q])
    flux_jump: np.ndarray       # 守恒通量跳跃 [F_N − ψt·W]，8 个分量
    oracle: np.ndarray          # 由通量跳跃与法向缩并得到的 9 个分量
    det_tau: float

    def as_dict(self) -> Dict[str, float]:
        return {name: float(value) for name, value in zip(RH_COMPONENTS, self.components)}

    @property
    def oracle_gap(self) -> float:
        return float(np.max(np.abs(self.components - self.oracle)))


def _side_quantities(U: MhdState, psi_t: float, psi_x2: float, psi_x3: float) -> Dict[str, float]:
    p, v, H, rho = U.p, np.array(U.v), np.array(U.H), U.rho
    v_n = v[0] - psi_x2 * v[1] - psi_x3 * v[2]
    h_n = H[0] - psi_x2 * H[1] - psi_x3 * H[2]
    return {
        "rho": rho,
        "v": v,
        "H": H,
        "v_n": v_n,
        "h_n": h_n,
        "m_n": rho * (v_n - psi_t),
        "v_tau": np.array([psi_x2 * v[0] + v[1], psi_x3 * v[0] + v[2]]),
        "h_tau": np.array([psi_x2 * H[0] + H[1], psi_x3 * H[0] + H[2]]),
        "q": U.q,
        "energy_density": U.e + 0.5 * (v @ v + (H @ H) / rho),
        "p": p,
    }


def _conservative_flux_jump(U: MhdState, normal: np.ndarray, psi_t: float) -> np.ndarray:
    """单侧 F_N − ψt·W，W = (ρ, ρv, H, 𝓔)"""
    p, v, H, rho, q = U.p, np.array(U.v), np.array(U.H), U.rho, U.q
    energy = rho * (U.e + 0.5 * v @ v) + 0.5 * H @ H
    W = np.concatenate([[rho], rho * v, H, [energy]])
    fluxes = []
    for j in range(3):
        mom = rho * v[j] * v - H[j] * H
        mom[j] += q
        induction = v[j] * H - H[j] * v
        e_flux = (energy + q) * v[j] - (H @ v) * H[j]
        fluxes.append(np.concatenate([[rho * v[j]], mom, induction, [e_flux]]))
    F_n = normal[0] * fluxes[0] + normal[1] * fluxes[1] + normal[2] * fluxes[2]
    return F_n - psi_t * W


def rh_residual(Uplus: MhdState, Uminus: MhdState, psi_t: float = 0.0,
                psi_x2: float = 0.0, psi_x3: float = 0.0) -> RhResidual:
    """
    跳跃条件残差

    分量形式中 m_N、H_N 写在跳跃内部（[m_N v_N] 等），在 [m_N] = [H_N] = 0 时
    与常见写法一致；由此分量形式与通量跳跃缩并对任意状态都逐项相等。
    法向动量分量带因子 |N|² = 1 + ψx2² + ψx3²。
    """
    normal = np.array([1.0, -psi_x2, -psi_x3])
    a = _side_quantities(Uplus, psi_t, psi_x2, psi_x3)
    b = _side_quantities(Uminus, psi_t, psi_x2, psi_x3)

    def jump(fn):
        return fn(a) - fn(b)

    n2 = normal @ normal
    components = np.array([
        jump(lambda s: s["m_n"]),
        jump(lambda s: s["h_n"]),
        jump(lambda s: s["m_n"] * s["v_n"] - s["h_n"] ** 2) + n2 * jump(lambda s: s["q"]),
        jump(lambda s: s["m_n"] * s["v_tau"][0] - s["h_n"] * s["h_tau"][0]),
        jump(lambda s: s["m_n"] * s["v_tau"][1] - s["h_n"] * s["h_tau"][1]),
        *[jump(lambda s, k=k: s["m_n"] * s["H"][k] / s["rho"] - s["h_n"] * s["v"][k])
          for k in range(3)],
        jump(lambda s: s["m_n"] * s["energy_density"] + s["q"] * s["v_n"] - s["h_n"] * (s["H"] @ s["v"])),
    ])

    J = _conservative_flux_jump(Uplus, normal, psi_t) - _conservative_flux_jump(Uminus, normal, psi_t)
    J_m = J[1:4]
    tau2 = np.array([psi_x2, 1.0, 0.0])
    tau3 = np.array([psi_x3, 0.0, 1.0])
    # [H_N] 来自 ∇·H = 0，不在守恒通量中
    oracle = np.array([J[0], components[1], J_m @ normal, J_m @ tau2, J_m @ tau3,
                       J[4], J[5], J[6], J[7]])

    contact = np.array([
        psi_t - a["v_n"],
        psi_t - b["v_n"],
        a["h_n"],
        b["h_n"],
        a["q"] - b["q"],
    ])
    det_tau = Uplus.H[1] * Uminus.H[2] - Uplus.H[2] * Uminus.H[1]
    return RhResidual(components=components, contact=contact, flux_jump=J, oracle=oracle,
                      det_tau=float(det_tau))


class DivHReport(NamedTuple):
    plus: np.ndarray
    minus: np.ndarray
    l2: float
    max: float


def div_H(field: TwoPhaseField, t_index: int, diff=None) -> DivHReport:
    """
    时间层 t_index 上两相磁场的散度

    默认二阶中心差分，x1 两端二阶单侧；返回散度场及其 L² 与最大范数。
    """
    from core.differences import CentralDiff

    diff = diff or CentralDiff(field.grid)
    g = field.grid
    cell = g.dx1 * g.dx2 * g.dx3
    divs = []
    for _, U in field.phases():
        H = U[IDX_H, t_index]
        divs.append(diff.x1(H[0]) + diff.x2(H[1]) + diff.x3(H[2]))
    l2 = float(np.sqrt(cell * sum(np.sum(d ** 2) for d in divs)))
    mx = float(max(np.max(np.abs(d)) for d in divs))
    return DivHReport(plus=divs[0], minus=divs[1], l2=l2, max=mx)


def check_admissible(U: np.ndarray) -> None:
    """压力为正"""
    p = np.asarray(U)[IDX_P]
    if np.any(p <= 0):
        raise DomainError("状态不可容许：压力非正", {"min_p": float(np.min(p))})
