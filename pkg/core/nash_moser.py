"""
Nash-Moser 迭代 - 修正状态、有效线性求解、前沿增量、误差项与右端递推

每一步：
    1. 由累积误差递推 (f_n, g_n, h_n)，检查伸缩和恒等式；
    2. 构造修正状态 V^{n+½} 并检查边界约束；
    3. 在 (U_a + V^{n+½}, Ψ_a + S_θΦ^n) 处冻结系数求解好未知量增量与 δφ；
    4. 逐相积分前沿增量的输运方程，强制迹耦合；
    5. 由好未知量恢复 δV，按定义计算全部误差项并累积。
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.constants import (
    DEFAULT_ALPHA,
    DEFAULT_CFL,
    DEFAULT_FIT_START,
    DEFAULT_KAPPA_MIN,
    DEFAULT_N_MAX,
    DEFAULT_S0,
    DEFAULT_S1,
    DEFAULT_S_LIST,
    DEFAULT_THETA0,
    DEFAULT_TOL_PARALLEL,
    DIVERGENCE_PATIENCE,
    TOL_CONSTRAINT,
    TOL_TELESCOPING,
)
from core.approx_solution import ReformulatedProblem, fill_outside_interior
from core.eos_state import TwoPhaseField
from core.exceptions import ConstraintViolation, IterationDiverged
from core.function_spaces import (
    AnisotropicNorm,
    SmootherFamily,
    boundary_norms,
    cutoff_width,
    x1_cutoff,
)
from core.geometry_transform import SIGNS, front_from_lifts
from core.linearized_solver import (
    GoodUnknownFrame,
    LinearSolveReport,
    recover_from_good,
    solve_linearized,
)

logger = logging.getLogger(__name__)

N_BOUNDARY = 5


# ===== 参考指数 =====

def _pos(x: float) -> float:
    return max(x, 0.0)


def reference_L1(s: float, s0: float, alpha: float) -> float:
    """内部误差 ‖e_k‖_s 的参考指数"""
    if alpha == s + 4:
        return max(s0 - alpha, 2 * (s0 - alpha) + 4)
    if alpha == s + 2:
        return s0 + 2 - alpha
    return max(_pos(s + 2 - alpha) + s0 - alpha - 1, s + s0 + 4 - 2 * alpha)


def reference_L2(s: float, s0: float, alpha: float) -> float:
    """前沿误差 ‖ē_k‖_s 的参考指数"""
    if alpha == s + 3:
        return s0 - alpha - 1
    if alpha == s + 2:
        return s0 - alpha
    return max(_pos(s + 2 - alpha) + 2 * (s0 - alpha), s + s0 + 2 - 2 * alpha)


def reference_L3(s: float, s0: float, alpha: float) -> float:
    """边界误差 ‖ẽ_k‖_s 的参考指数"""
    if alpha == s + 4:
        return s0 - alpha - 1
    if alpha == s + 3:
        return s0 - alpha
    return max(_pos(s + 3 - alpha) + 2 * (s0 - alpha), s + s0 + 3 - 2 * alpha)


def monitor_exponents(s: float, s0: float, alpha: float) -> Dict[str, float]:
    """
    各监测量关于 θ 的参考指数

    "increment" 与 "rhs" 另含一个 Δ 因子，拟合时先除以 Δ。
    """
    return {
        "iterate": _pos(s - alpha),
        "high": s - alpha,
        "modified": s + 1 - alpha,
        "accumulated": 1.0,
        "rhs": s - alpha - 1,
        "increment": s - alpha - 1,
        "L1": reference_L1(s, s0, alpha),
        "L2": reference_L2(s, s0, alpha),
        "L3": reference_L3(s, s0, alpha),
    }


def fit_exponent(x: Sequence[float], y: Sequence[float]) -> float:
    """log y 对 log x 的最小二乘斜率；有效点少于两个时返回 nan"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    if np.count_nonzero(ok) < 2 or np.ptp(np.log(x[ok])) == 0:
        return float("nan")
    slope, _ = np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)
    return float(slope)


# ===== 设置与状态 =====

@dataclass
class IterationSettings:
    theta0: float = DEFAULT_THETA0
    n_max: int = DEFAULT_N_MAX
    s_list: List[int] = field(default_factory=lambda: list(DEFAULT_S_LIST))
    s0: int = DEFAULT_S0
    alpha: int = DEFAULT_ALPHA
    s1: int = DEFAULT_S1
    cfl: float = DEFAULT_CFL
    kappa_min: float = DEFAULT_KAPPA_MIN
    tol_parallel: float = DEFAULT_TOL_PARALLEL
    tol_constraint: float = TOL_CONSTRAINT
    tol_telescoping: float = TOL_TELESCOPING
    patience: int = DIVERGENCE_PATIENCE
    fit_start: int = DEFAULT_FIT_START
    keep_increments: bool = False

    @property
    def norm_orders(self) -> List[int]:
        return sorted(set(int(s) for s in self.s_list) | {int(self.s0)})


@dataclass
class RhsTriple:
    """f_n（内部）、g_n（边界 5 分量）、h_n（前沿方程）"""
    f: TwoPhaseField
    g: np.ndarray
    h: TwoPhaseField


@dataclass
class ModifiedState:
    """
    V^{n+½}

    分量 1、8 与 3、4、6、7 取 S_θV^n，分量 2、5 由边界约束的显式公式给出。
    """
    V: TwoPhaseField
    SV: TwoPhaseField
    SPhi: TwoPhaseField
    Sphi: np.ndarray
    constraint_residual: float


@dataclass
class FrontIncrement:
    dPhi: TwoPhaseField
    trace_gap: float


@dataclass
class ErrorTerms:
    """第 n 步的 e⁽¹⁻⁴⁾、ē⁽¹⁻⁴⁾、ẽ⁽¹⁻⁴⁾ 以及闭式对照"""
    e: List[TwoPhaseField]
    ebar: List[TwoPhaseField]
    etilde: List[np.ndarray]
    residual_new: TwoPhaseField
    e4_closed: TwoPhaseField
    ebar1_closed: TwoPhaseField
    solve_defect: float
    bc_defect: float

    @property
    def interior(self) -> TwoPhaseField:
        total = self.e[0]
        for term in self.e[1:]:
            total = total + term
        return total

    @property
    def eikonal(self) -> TwoPhaseField:
        total = self.ebar[0]
        for term in self.ebar[1:]:
            total = total + term
        return total

    @property
    def boundary(self) -> np.ndarray:
        return sum(self.etilde[1:], self.etilde[0])

    @property
    def ebar3_max(self) -> float:
        return self.ebar[2].max_abs()

    @property
    def e4_closed_gap(self) -> float:
        return (self.e[3] - self.e4_closed).max_abs()

    @property
    def ebar1_closed_gap(self) -> float:
        return (self.ebar[0] - self.ebar1_closed).max_abs()


@dataclass
class StepRecord:
    """单步指标：范数表（量 × s）与标量检查"""
    n: int
    theta: float
    delta: float
    norms: Dict[str, Dict[int, float]]
    checks: Dict[str, float]
    wall_time: float = 0.0

    def as_row(self) -> Dict[str, float]:
        row: Dict[str, float] = {"n": self.n, "theta": self.theta, "delta": self.delta}
        for name, table in self.norms.items():
            for s, value in sorted(table.items()):
                row[f"{name}_s{s}"] = value
        row.update(self.checks)
        return row


@dataclass
class IterationState:
    """迭代的当前状态与全部累积量"""
    problem: ReformulatedProblem
    family: SmootherFamily
    n: int
    V: TwoPhaseField
    Phi: TwoPhaseField
    phi: np.ndarray
    residual: TwoPhaseField
    e_hist: List[TwoPhaseField] = field(default_factory=list)
    ebar_hist: List[TwoPhaseField] = field(default_factory=list)
    etilde_hist: List[np.ndarray] = field(default_factory=list)
    f_sum: Optional[TwoPhaseField] = None
    g_sum: Optional[np.ndarray] = None
    h_sum: Optional[TwoPhaseField] = None
    records: List[StepRecord] = field(default_factory=list)
    increments: List[Tuple[TwoPhaseField, TwoPhaseField, np.ndarray]] = field(default_factory=list)

    @property
    def theta(self) -> float:
        return self.family.theta(self.n)

    @property
    def delta(self) -> float:
        return self.family.delta(self.n)

    @property
    def E(self) -> TwoPhaseField:
        return _accumulate(self.e_hist, self.n, lambda: TwoPhaseField.zeros(self.problem.grid))

    @property
    def Ebar(self) -> TwoPhaseField:
        return _accumulate(self.ebar_hist, self.n,
                           lambda: TwoPhaseField.zeros(self.problem.grid, None))

    @property
    def Etilde(self) -> np.ndarray:
        return _accumulate(self.etilde_hist, self.n,
                           lambda: np.zeros((N_BOUNDARY,) + self.problem.grid.boundary_shape))

    def trace_coupling(self) -> float:
        """max|Φ±|_{x1=0} − φ|"""
        Pp, Pm = self.Phi.boundary()
        return float(max(np.max(np.abs(Pp - self.phi)), np.max(np.abs(Pm - self.phi))))


def initial_state(problem: ReformulatedProblem, family: SmootherFamily) -> IterationState:
    """V⁰ = Φ⁰ = φ⁰ = 0"""
    grid = problem.grid
    V = TwoPhaseField.zeros(grid)
    Phi = TwoPhaseField.zeros(grid, None)
    phi = np.zeros(grid.boundary_shape)
    return IterationState(problem=problem, family=family, n=0, V=V, Phi=Phi, phi=phi,
                          residual=problem.nonlinear_residual(V, Phi))


def _accumulate(items, count: int, zero: Callable):
    """Σ_{j<count} items[j]"""
    total = zero()
    for item in items[:count]:
        total = total + item
    return total


# ===== 右端递推 =====

def recursion_term(n: int, smooth: Callable[[np.ndarray, int], np.ndarray],
                   source: Optional[np.ndarray], errors: Sequence[np.ndarray],
                   shape: Tuple[int, ...]) -> np.ndarray:
    """
    第 n 个右端

    n = 0：S_0·source（source 缺省为 0）；
    n ≥ 1：(S_n − S_{n−1})(source − E_{n−1}) − S_n e_{n−1}，E_{n−1} = Σ_{j<n−1} e_j。
    """
    base = np.zeros(shape) if source is None else np.asarray(source, dtype=float)
    if n == 0:
        return smooth(base, 0)
    for e in errors[: n - 1]:
        base = base - e
    return smooth(base, n) - smooth(base, n - 1) - smooth(errors[n - 1], n)


def telescoping_residual(n: int, smooth: Callable[[np.ndarray, int], np.ndarray],
                         source: Optional[np.ndarray], errors: Sequence[np.ndarray],
                         term_sum: np.ndarray) -> float:
    """max|Σ_{j≤n} f_j + S_n E_n − S_n source|，E_n = Σ_{j<n} e_j"""
    E = np.zeros_like(term_sum)
    for e in errors[:n]:
        E = E + e
    target = smooth(source, n) if source is not None else 0.0
    return float(np.max(np.abs(term_sum + smooth(E, n) - target)))


def _phasewise(n: int, smooth, source: Optional[TwoPhaseField], errors: Sequence[TwoPhaseField],
               grid, components) -> TwoPhaseField:
    shape = grid.shape if components is None else (components,) + grid.shape
    out = {s: recursion_term(n, smooth, None if source is None else source[s],
                             [e[s] for e in errors], shape) for s in SIGNS}
    return TwoPhaseField(out[1], out[-1], grid)


def rhs_recursion(state: IterationState) -> RhsTriple:
    """
    (f_n, g_n, h_n)

    f 用 S_θ，h 用保迹光滑 S^tr_θ，g 用边界切向光滑。
    """
    fam, n = state.family, state.n
    grid = state.problem.grid
    f = _phasewise(n, fam.S, state.problem.approx.f_a, state.e_hist, grid, 8)
    h = _phasewise(n, fam.S_trace, None, state.ebar_hist, grid, None)
    g = recursion_term(n, fam.S_boundary, None, state.etilde_hist,
                       (N_BOUNDARY,) + grid.boundary_shape)
    return RhsTriple(f=f, g=g, h=h)


def telescoping_checks(state: IterationState) -> Dict[str, float]:
    """在 f_sum 等已包含第 n 项后检查三个伸缩和恒等式"""
    fam, n = state.family, state.n
    f_res = max(telescoping_residual(n, fam.S, state.problem.approx.f_a[s],
                                     [e[s] for e in state.e_hist], state.f_sum[s])
                for s in SIGNS)
    h_res = max(telescoping_residual(n, fam.S_trace, None, [e[s] for e in state.ebar_hist],
                                     state.h_sum[s])
                for s in SIGNS)
    g_res = telescoping_residual(n, fam.S_boundary, None, state.etilde_hist, state.g_sum)
    return {"telescoping_f": f_res, "telescoping_g": g_res, "telescoping_h": h_res}


# ===== 修正状态 =====

def modified_state(V: TwoPhaseField, Phi: TwoPhaseField, phi: np.ndarray, n: int,
                   problem: ReformulatedProblem, family: SmootherFamily,
                   tol: float = TOL_CONSTRAINT) -> ModifiedState:
    """
    构造 V^{n+½}

    V2 = ∂tSΦ + ∂2(Ψ_a+SΦ)V3 + ∂3(Ψ_a+SΦ)V4 + U_a3∂2SΦ + U_a4∂3SΦ，
    V5 = ∂2(Ψ_a+SΦ)V6 + ∂3(Ψ_a+SΦ)V7 + U_a6∂2SΦ + U_a7∂3SΦ。

    Raises:
        ConstraintViolation: (V^{n+½}, S_θφ) 处 ℬ 的前两组分量超出容差
    """
    approx = problem.approx
    grid = problem.grid
    SV = V.map(lambda a: family.S(a, n))
    SPhi = Phi.map(lambda a: family.S_trace(a, n))
    Sphi = family.S_boundary(phi, n)

    out = {}
    for s in SIGNS:
        d = problem.diffs[s]
        Ua = approx.Ua[s]
        th = SPhi[s]
        P = approx.front[s] + th
        P2, P3 = d.x2(P), d.x3(P)
        th2, th3 = d.x2(th), d.x3(th)
        Vh = SV[s].copy()
        Vh[1] = d.t(th, front=True) + P2 * Vh[2] + P3 * Vh[3] + Ua[2] * th2 + Ua[3] * th3
        Vh[4] = P2 * Vh[5] + P3 * Vh[6] + Ua[5] * th2 + Ua[6] * th3
        out[s] = Vh
    Vhalf = TwoPhaseField(out[1], out[-1], grid)

    residual = float(np.max(np.abs(problem.boundary(Vhalf, Sphi)[:4])))
    scale = max(1.0, Vhalf.max_abs(), float(np.max(np.abs(Sphi))) if Sphi.size else 0.0)
    if residual > tol * scale:
        raise ConstraintViolation("修正状态不满足边界约束",
                                  {"n": n, "residual": residual, "tol": tol * scale})
    logger.debug(f"修正状态 n={n}: 边界约束残差={residual:.2e}")
    return ModifiedState(V=Vhalf, SV=SV, SPhi=SPhi, Sphi=Sphi, constraint_residual=residual)


# ===== 线性求解与增量 =====

def effective_solve(state: IterationState, modified: ModifiedState, rhs: RhsTriple,
                    settings: IterationSettings) -> Tuple[GoodUnknownFrame, LinearSolveReport]:
    """在 (U_a + V^{n+½}, Ψ_a + S_θΦ^n) 处冻结系数，求解 δV̇ 与 δφ"""
    problem = state.problem
    approx = problem.approx
    Ub = approx.Ua + modified.V
    lifts = approx.front.Psi + modified.SPhi
    front = front_from_lifts(lifts.plus, lifts.minus, problem.grid)
    frame = GoodUnknownFrame(Ub, front, problem.eos, problem.diffs,
                             tol_parallel=settings.tol_parallel, kappa_min=settings.kappa_min)
    report = solve_linearized(frame, rhs.f, rhs.g, cfl=settings.cfl)
    return frame, report


def front_increment_solve(frame: GoodUnknownFrame, dV_dot: TwoPhaseField, dphi: np.ndarray,
                          h: TwoPhaseField) -> FrontIncrement:
    """
    逐相显式积分 ℰ'(δV̇, δΦ) = h_n

    ∂tδΦ = h + δV̇2 − ∂2Ψ δV̇3 − ∂3Ψ δV̇4 − U3∂2δΦ − U4∂3δΦ，
    系数取自冻结框架。积分后记录迹差，再以截断提升使 δΦ|_{x1=0} = δφ。
    """
    grid = frame.grid
    dt = grid.dt
    chi = x1_cutoff(grid.x1, cutoff_width(grid))[:, None, None]
    out = {}
    gap = 0.0
    for s in SIGNS:
        d = frame.diffs[s]
        P = frame.front[s]
        Ub = frame.U[s]
        W = dV_dot[s]
        src = h[s] + W[1] - d.x2(P) * W[2] - d.x3(P) * W[3]
        Th = np.zeros(grid.shape)
        for m in range(grid.nt - 1):
            Tm = Th[m]
            rate = (src[m] - Ub[2, m] * d.x2(Tm) - Ub[3, m] * d.x3(Tm)
                    + d.dissipation(Tm[None], front=True)[0])
            Th[m + 1] = Tm + dt * rate
        gap = max(gap, float(np.max(np.abs(Th[:, 0] - dphi))))
        Th = Th + chi[None] * (dphi - Th[:, 0])[:, None]
        Th[:, 0] = dphi
        out[s] = Th
    logger.debug(f"前沿增量: 迹差={gap:.2e}")
    return FrontIncrement(TwoPhaseField(out[1], out[-1], grid, vanishing_past=True), gap)


def recover_increment(dV_dot: TwoPhaseField, dPhi: TwoPhaseField, frame: GoodUnknownFrame,
                      kappa_min: float = DEFAULT_KAPPA_MIN) -> TwoPhaseField:
    """δV = δV̇ + δΦ·∂1U/∂1Ψ（U, Ψ 为冻结框架的基态）"""
    out = {s: recover_from_good(dV_dot[s], dPhi[s], frame.U[s], frame.front[s],
                                frame.diffs[s], kappa_min) for s in SIGNS}
    return TwoPhaseField(out[1], out[-1], frame.grid, vanishing_past=True)


# ===== 误差项 =====

def error_terms(state: IterationState, modified: ModifiedState, frame: GoodUnknownFrame,
                rhs: RhsTriple, dV_dot: TwoPhaseField, dV: TwoPhaseField, dPhi: TwoPhaseField,
                dphi: np.ndarray) -> ErrorTerms:
    """
    按定义计算第 n 步的误差项

    e1 = ℒ(V^{n+1})V^{n+1} − ℒ(V^n)V^n − L'_{V^n}(δV,δΦ)，
    e2 = (L'_{V^n} − L'_{SV^n})(δV,δΦ)，e3 = (L'_{SV^n} − L'_{V^{n+½}})(δV,δΦ)，
    e4 = L'_{V^{n+½}}(δV,δΦ) − L'_e δV̇；ē、ẽ 同理，ē4 = ℰ'_{V^{n+½}}(δV,δΦ) − h_n，
    ẽ4 = B'_{V^{n+½}}(δV,δφ) − g_n。

    Raises:
        ConstraintViolation: ē3 不恒为零
    """
    problem = state.problem
    approx = problem.approx
    grid = problem.grid
    Ua, Psi_a = approx.Ua, approx.front.Psi
    Vn, Phin, phin = state.V, state.Phi, state.phi
    Vn1, Phin1, phin1 = Vn + dV, Phin + dPhi, phin + dphi
    bases = {
        "n": (Vn, Phin, phin),
        "S": (modified.SV, modified.SPhi, modified.Sphi),
        "half": (modified.V, modified.SPhi, modified.Sphi),
    }

    # ℒ
    residual_new = problem.nonlinear_residual(Vn1, Phin1)
    Lp = {}
    for key, (Vb, Pb, _) in bases.items():
        Ub, Psib = Ua + Vb, Psi_a + Pb
        out = {s: problem.L_prime(s, Ub[s], Psib[s], dV[s], dPhi[s]) for s in SIGNS}
        Lp[key] = TwoPhaseField(out[1], out[-1], grid)
    le = {s: fill_outside_interior(frame.apply_L(s, dV_dot[s]) + frame.apply_E(s, dV_dot[s]))
          for s in SIGNS}
    Le = TwoPhaseField(le[1], le[-1], grid)
    e1 = residual_new - state.residual - Lp["n"]
    e = [e1, Lp["n"] - Lp["S"], Lp["S"] - Lp["half"], Lp["half"] - Le]
    solve_defect = (Le - rhs.f.map(fill_outside_interior)).max_abs()

    closed = {}
    for s in SIGNS:
        d = problem.diffs[s]
        LU = problem.operator(s, frame.U[s], frame.front[s])
        closed[s] = fill_outside_interior(dPhi[s] / d.x1(frame.front[s]) * d.x1(LU))
    e4_closed = TwoPhaseField(closed[1], closed[-1], grid)

    # ℰ
    def eprime(key):
        Vb, Pb, _ = bases[key]
        out = {s: problem.E_prime(s, Vb[s], Pb[s], dV[s], dPhi[s]) for s in SIGNS}
        return TwoPhaseField(out[1], out[-1], grid)

    Ep = {key: eprime(key) for key in bases}
    ebar1 = problem.eikonal(Vn1, Phin1) - problem.eikonal(Vn, Phin) - Ep["n"]
    ebar = [ebar1, Ep["n"] - Ep["S"], Ep["S"] - Ep["half"], Ep["half"] - rhs.h]
    if ebar[2].max_abs() != 0.0:
        raise ConstraintViolation("ē3 不恒为零", {"max": ebar[2].max_abs()})
    cl = {}
    for s in SIGNS:
        d = problem.diffs[s]
        cl[s] = d.x2(dPhi[s]) * dV[s][2] + d.x3(dPhi[s]) * dV[s][3]
    ebar1_closed = TwoPhaseField(cl[1], cl[-1], grid)

    # ℬ
    def bprime(key, increment):
        Vb, _, pb = bases[key]
        return problem.B_prime(Ua + Vb, approx.psi + pb, increment, dphi)

    Bp = {key: bprime(key, dV) for key in bases}
    etilde1 = problem.boundary(Vn1, phin1) - problem.boundary(Vn, phin) - Bp["n"]
    etilde = [etilde1, Bp["n"] - Bp["S"], Bp["S"] - Bp["half"], Bp["half"] - rhs.g]
    bc_defect = float(np.max(np.abs(bprime("half", dV_dot) - rhs.g)))

    return ErrorTerms(e=e, ebar=ebar, etilde=etilde, residual_new=residual_new,
                      e4_closed=e4_closed, ebar1_closed=ebar1_closed,
                      solve_defect=solve_defect, bc_defect=bc_defect)


def newton_quadraticity(problem: ReformulatedProblem, V: TwoPhaseField, Phi: TwoPhaseField,
                        phi: np.ndarray, dV: TwoPhaseField, dPhi: TwoPhaseField,
                        dphi: np.ndarray, scales: Sequence[float] = (1.0, 0.5, 0.25, 0.125)
                        ) -> Dict[str, float]:
    """
    e1、ē1、ẽ1 随增量幅度 t 的拟合斜率（应为 2）

    增量整体乘以 t，误差的 log-log 斜率由最小二乘给出。
    """
    approx = problem.approx
    grid = problem.grid
    base_R = problem.nonlinear_residual(V, Phi)
    base_E = problem.eikonal(V, Phi)
    base_B = problem.boundary(V, phi)
    Ub, Psib = approx.Ua + V, approx.front.Psi + Phi
    norms = {"e1": [], "ebar1": [], "etilde1": []}
    for t in scales:
        w, th, b = dV.scale(t), dPhi.scale(t), t * np.asarray(dphi)
        Lp = {s: problem.L_prime(s, Ub[s], Psib[s], w[s], th[s]) for s in SIGNS}
        Ep = {s: problem.E_prime(s, V[s], Phi[s], w[s], th[s]) for s in SIGNS}
        e1 = problem.nonlinear_residual(V + w, Phi + th) - base_R - TwoPhaseField(Lp[1], Lp[-1], grid)
        eb = problem.eikonal(V + w, Phi + th) - base_E - TwoPhaseField(Ep[1], Ep[-1], grid)
        et = (problem.boundary(V + w, phi + b) - base_B
              - problem.B_prime(Ub, approx.psi + phi, w, b))
        norms["e1"].append(e1.max_abs())
        norms["ebar1"].append(eb.max_abs())
        norms["etilde1"].append(float(np.max(np.abs(et))))
    return {key: fit_exponent(scales, values) for key, values in norms.items()}


# ===== 迭代主循环 =====

class _Norms:
    """两相合并的 ‖·‖_{s,T}（μ = 0）与边界 H^{s−1} 范数"""

    def __init__(self, grid, orders: Sequence[int]):
        self.grid = grid
        self.orders = list(orders)
        self.norm = AnisotropicNorm(grid, 0, 0.0)

    def volume(self, field_: TwoPhaseField) -> Dict[int, float]:
        return self.norm.norms(np.stack([field_.plus, field_.minus]), self.orders)

    def boundary(self, b: np.ndarray) -> Dict[int, float]:
        values = boundary_norms(b, self.grid, sorted({max(s - 1, 0) for s in self.orders}), 0.0)
        return {s: values[max(s - 1, 0)] for s in self.orders}


@dataclass
class ConvergenceReport:
    """收敛判定与拟合指数"""
    converged: bool
    steps: int
    residual_initial: float
    residual_final: float
    residual_ratio: float
    residual_slope: float
    increment_slopes: Dict[int, float]
    reference_slopes: Dict[int, float]
    error_slopes: Dict[str, Dict[int, float]]
    error_references: Dict[str, Dict[int, float]]
    diverged: bool = False
    message: str = ""

    def as_dict(self) -> Dict:
        def keyed(table):
            return {str(k): v for k, v in table.items()}
        return {
            "converged": self.converged,
            "steps": self.steps,
            "residual_initial": self.residual_initial,
            "residual_final": self.residual_final,
            "residual_ratio": self.residual_ratio,
            "residual_slope": self.residual_slope,
            "increment_slopes": keyed(self.increment_slopes),
            "reference_slopes": keyed(self.reference_slopes),
            "error_slopes": {k: keyed(v) for k, v in self.error_slopes.items()},
            "error_references": {k: keyed(v) for k, v in self.error_references.items()},
            "diverged": self.diverged,
            "message": self.message,
        }


@dataclass
class IterationResult:
    state: IterationState
    report: ConvergenceReport
    initial_residual: Dict[int, float]


def iterate_step(state: IterationState, settings: IterationSettings, norms: _Norms) -> StepRecord:
    """执行一步迭代并更新 state"""
    started = time.perf_counter()
    problem, fam, n = state.problem, state.family, state.n

    rhs = rhs_recursion(state)
    state.f_sum = rhs.f if state.f_sum is None else state.f_sum + rhs.f
    state.g_sum = rhs.g if state.g_sum is None else state.g_sum + rhs.g
    state.h_sum = rhs.h if state.h_sum is None else state.h_sum + rhs.h
    checks = telescoping_checks(state)
    scale = max(1.0, problem.approx.f_a.max_abs())
    worst = max(checks.values())
    if worst > settings.tol_telescoping * scale:
        logger.warning(f"第 {n} 步伸缩和恒等式残差 {worst:.2e} 超过容差")

    mod = modified_state(state.V, state.Phi, state.phi, n, problem, fam, settings.tol_constraint)
    frame, solve = effective_solve(state, mod, rhs, settings)
    dV_dot, dphi = solve.W, solve.phi
    front = front_increment_solve(frame, dV_dot, dphi, rhs.h)
    dV = recover_increment(dV_dot, front.dPhi, frame, settings.kappa_min)
    terms = error_terms(state, mod, frame, rhs, dV_dot, dV, front.dPhi, dphi)

    table: Dict[str, Dict[int, float]] = {
        "V": norms.volume(state.V),
        "Phi": norms.volume(state.Phi),
        "phi": norms.boundary(state.phi),
        "SV": norms.volume(mod.SV),
        "V_high": norms.volume(state.V - mod.SV),
        "V_modified": norms.volume(mod.V - mod.SV),
        "dV": norms.volume(dV),
        "dV_dot": norms.volume(dV_dot),
        "dPhi": norms.volume(front.dPhi),
        "dphi": norms.boundary(dphi),
        "f": norms.volume(rhs.f),
        "g": norms.boundary(rhs.g),
        "h": norms.volume(rhs.h),
        "E": norms.volume(state.E),
        "Ebar": norms.volume(state.Ebar),
        "Etilde": norms.boundary(state.Etilde),
    }
    for i in range(4):
        table[f"e{i + 1}"] = norms.volume(terms.e[i])
        table[f"ebar{i + 1}"] = norms.volume(terms.ebar[i])
        table[f"etilde{i + 1}"] = norms.boundary(terms.etilde[i])

    # 更新迭代量
    state.V = state.V + dV
    state.Phi = state.Phi + front.dPhi
    state.phi = state.phi + dphi
    state.residual = terms.residual_new
    state.e_hist.append(terms.interior)
    state.ebar_hist.append(terms.eikonal)
    state.etilde_hist.append(terms.boundary)
    if settings.keep_increments:
        state.increments.append((dV, front.dPhi, dphi))

    table["residual"] = norms.volume(state.residual)
    table["boundary_residual"] = norms.boundary(problem.boundary(state.V, state.phi))
    checks.update({
        "modified_constraint": mod.constraint_residual,
        "trace_gap": front.trace_gap,
        "trace_coupling": state.trace_coupling(),
        "past_violation": max(state.V.past_violation(), state.Phi.past_violation()),
        "ebar3_max": terms.ebar3_max,
        "ebar1_closed_gap": terms.ebar1_closed_gap,
        "e4_closed_gap": terms.e4_closed_gap,
        "solve_defect": terms.solve_defect,
        "bc_defect": terms.bc_defect,
        "linear_bc_residual": solve.bc_residual,
        "linear_gap": solve.max_gap,
        "courant": solve.courant,
    })
    record = StepRecord(n=n, theta=fam.theta(n), delta=fam.delta(n), norms=table, checks=checks,
                        wall_time=time.perf_counter() - started)
    state.records.append(record)
    state.n += 1
    s0 = settings.s0
    logger.info(f"迭代 n={n}: θ={record.theta:.4f}, ‖δV‖_{s0}={table['dV'][s0]:.3e}, "
                f"残差_{s0}={table['residual'][s0]:.3e}, 伸缩和={max(v for k, v in checks.items() if k.startswith('telescoping_')):.1e}")
    return record


def fit_window(records: Sequence[StepRecord], start: int) -> Sequence[StepRecord]:
    """
    参与增量与误差指数拟合的步

    第 0 步求解整个 S_θ0 f_a，第 1 步的右端含 S_θ1 e_0，二者不随 θ 的差分尺度变化；
    剩余步数不足两步时退回全部记录。
    """
    window = records[start:]
    return window if len(window) >= 2 else records


def _fit_tables(records: Sequence[StepRecord], settings: IterationSettings):
    records = fit_window(records, settings.fit_start)
    thetas = [r.theta for r in records]
    deltas = [r.delta for r in records]
    inc, ref = {}, {}
    for s in settings.norm_orders:
        scaled = [r.norms["dV"][s] / d for r, d in zip(records, deltas)]
        inc[s] = fit_exponent(thetas, scaled)
        ref[s] = s - settings.alpha - 1
    slopes: Dict[str, Dict[int, float]] = {}
    refs: Dict[str, Dict[int, float]] = {}
    for kind, ref_fn in (("e", reference_L1), ("ebar", reference_L2), ("etilde", reference_L3)):
        slopes[kind], refs[kind] = {}, {}
        for s in settings.norm_orders:
            values = [sum(r.norms[f"{kind}{i}"][s] for i in range(1, 5)) / d
                      for r, d in zip(records, deltas)]
            slopes[kind][s] = fit_exponent(thetas, values)
            refs[kind][s] = ref_fn(s, settings.s0, settings.alpha)
    return inc, ref, slopes, refs


def convergence_report(records: Sequence[StepRecord], initial: float,
                       settings: IterationSettings, diverged: bool = False,
                       message: str = "") -> ConvergenceReport:
    s0 = settings.s0
    final = records[-1].norms["residual"][s0] if records else initial
    ratio = final / initial if initial > 0 else 0.0
    residual_slope = fit_exponent([r.theta for r in records],
                                  [r.norms["residual"][s0] for r in records])
    inc, ref, slopes, refs = _fit_tables(records, settings)
    converged = (not diverged) and ratio <= 0.1 and not (residual_slope > 0)
    return ConvergenceReport(
        converged=converged,
        steps=len(records),
        residual_initial=initial,
        residual_final=final,
        residual_ratio=ratio,
        residual_slope=residual_slope,
        increment_slopes=inc,
        reference_slopes=ref,
        error_slopes=slopes,
        error_references=refs,
        diverged=diverged,
        message=message,
    )


def run_iteration(problem: ReformulatedProblem, settings: IterationSettings) -> IterationResult:
    """
    执行 n_max 步迭代

    s0 阶残差连续 patience 步增长时中止。

    Raises:
        IterationDiverged: 携带已完成步的记录与收敛报告
    """
    grid = problem.grid
    family = SmootherFamily(grid, settings.theta0)
    state = initial_state(problem, family)
    norms = _Norms(grid, settings.norm_orders)
    initial = norms.volume(state.residual)
    s0 = settings.s0
    logger.info(f"开始 Nash-Moser 迭代: θ0={settings.theta0}, n_max={settings.n_max}, "
                f"(s0, α, s1)=({s0}, {settings.alpha}, {settings.s1}), 初始残差={initial[s0]:.3e}")

    growth = 0
    previous = initial[s0]
    for _ in range(settings.n_max):
        record = iterate_step(state, settings, norms)
        current = record.norms["residual"][s0]
        growth = growth + 1 if current > previous else 0
        previous = current
        if growth >= settings.patience or not math.isfinite(current):
            message = f"s0 阶残差连续 {growth} 步增长"
            report = convergence_report(state.records, initial[s0], settings, True, message)
            logger.error(f"迭代发散: {message}")
            raise IterationDiverged(message, history=IterationResult(state, report, initial),
                                    details={"n": state.n, "residual": current})

    report = convergence_report(state.records, initial[s0], settings)
    logger.info(f"迭代结束: 残差比={report.residual_ratio:.3e}, 收敛={report.converged}")
    return IterationResult(state=state, report=report, initial_residual=initial)
