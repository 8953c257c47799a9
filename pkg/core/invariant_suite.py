"""
不变量检验套件 - `check` 子命令背后的全部性质检验

每项检验返回 CheckResult；任何领域错误都记为该项失败，不中断其余检验。
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from config.constants import TOL_SYMMETRY, TOL_TELESCOPING, TWO_PI
from config.run_config import RunConfig
from core.approx_solution import build_compat_data
from core.eos_state import Eos, Grid, TwoPhaseField
from core.exceptions import CvsLabError, DegenerateConfiguration
from core.function_spaces import (
    Smoother,
    SmootherFamily,
    cutoff_width,
    harness_grid,
    measure_smoothing_constants,
    x1_cutoff,
)
from core.geometry_transform import SIGNS
from core.linearized_solver import (
    GoodUnknownFrame,
    boundary_quadratic_form,
    p_transform_check,
)
from core.mhd_system import (
    augmented_matrices,
    lambda_fields,
    primitive_matrices,
    stability_margin_field,
)
from core.nash_moser import newton_quadraticity, recursion_term, run_iteration, telescoping_residual
from core.scenarios import Scenario, build_scenario
from core.studies import (
    compat_oracle,
    linearization_study,
    planar_frame,
    planar_preservation,
)

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    """单项检验结果"""
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0

    def as_row(self) -> Dict[str, object]:
        return {"check": self.name, "passed": self.passed, "value": self.value,
                "threshold": self.threshold, "detail": self.detail}


@dataclass
class SuiteReport:
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failed(self) -> List[str]:
        return [r.name for r in self.results if not r.passed]

    def rows(self) -> List[Dict[str, object]]:
        return [r.as_row() for r in self.results]


def random_states(rng: np.random.Generator, count: int) -> np.ndarray:
    """随机可容许状态 (8, count)：p ∈ [0.5, 2]，其余分量在 [−1, 1] 内"""
    U = rng.uniform(-1.0, 1.0, size=(8, count))
    U[0] = rng.uniform(0.5, 2.0, size=count)
    return U


def _tangential_fields(rng: np.random.Generator, count: int, min_angle: float = 0.3):
    """两组夹角不小于 min_angle 的切向磁场"""
    a = rng.uniform(0.0, TWO_PI, size=count)
    gap = rng.uniform(min_angle, np.pi - min_angle, size=count)
    rp = rng.uniform(0.5, 1.5, size=count)
    rm = rng.uniform(0.5, 1.5, size=count)
    return (rp * np.cos(a), rp * np.sin(a)), (rm * np.cos(a + gap), rm * np.sin(a + gap))


class InvariantSuite:
    """
    依次执行对称性、λ 残差、解耦恒等式、P 结构、光滑常数、线性化阶数、平面保持、
    伸缩和、修正状态约束、Newton 二次性与相容性数据等检验
    """

    def __init__(self, config: RunConfig, seed: Optional[int] = None, samples: int = 1000,
                 iteration_steps: int = 2):
        self.config = config
        self.seed = config.perturbation.seed if seed is None else seed
        self.rng = np.random.default_rng(self.seed)
        self.samples = samples
        self.iteration_steps = iteration_steps
        self.eos = Eos(config.eos.gamma, config.eos.reference_entropy_scale)
        self._scenario: Optional[Scenario] = None

    @property
    def scenario(self) -> Scenario:
        if self._scenario is None:
            self._scenario = build_scenario(self.config, self.seed)
        return self._scenario

    def checks(self) -> List[Callable[[], CheckResult]]:
        return [
            self.check_symmetry,
            self.check_lambda,
            self.check_parallel_rejected,
            self.check_decoupling,
            self.check_p_structure,
            self.check_smoothing,
            self.check_linearization,
            self.check_planar,
            self.check_telescoping,
            self.check_compat_oracle,
            self.check_iteration_bookkeeping,
            self.check_newton,
        ]

    def run(self, only: Optional[List[str]] = None) -> SuiteReport:
        report = SuiteReport()
        for check in self.checks():
            name = check.__name__.replace("check_", "")
            if only and name not in only:
                continue
            started = time.perf_counter()
            try:
                result = check()
            except CvsLabError as e:
                logger.error(f"检验 {name} 出错: {e}")
                result = CheckResult(name, False, float("nan"), float("nan"), str(e))
            result.seconds = time.perf_counter() - started
            status = "通过" if result.passed else "失败"
            logger.info(f"[{status}] {result.name}: {result.value:.3e} (阈值 {result.threshold:.3e}) "
                        f"{result.detail}")
            report.results.append(result)
        return report

    # ===== 代数性质 =====

    def check_symmetry(self) -> CheckResult:
        """B_j、A_j 对称且 B0、A0 正定"""
        U = random_states(self.rng, self.samples)
        bound = stability_margin_field(U, 0.0, self.eos)
        lam = self.rng.uniform(-0.9, 0.9, size=self.samples) * np.sqrt(bound)
        worst, min_eig = 0.0, np.inf
        for mats in (primitive_matrices(U, self.eos), augmented_matrices(U, lam, self.eos)):
            for A in mats:
                scale = np.max(np.abs(A), axis=(-2, -1))
                asym = np.max(np.abs(A - np.swapaxes(A, -1, -2)), axis=(-2, -1)) / scale
                worst = max(worst, float(np.max(asym)))
            min_eig = min(min_eig, float(np.min(np.linalg.eigvalsh(mats[0]))))
        ok = worst <= TOL_SYMMETRY and min_eig > 0.0
        return CheckResult("symmetry", ok, worst, TOL_SYMMETRY, f"min eig A0 = {min_eig:.3e}")

    def check_lambda(self) -> CheckResult:
        """切向关系 Δv_τ = λ⁺H_τ⁺ − λ⁻H_τ⁻ 的残差"""
        Up, Um = random_states(self.rng, self.samples), random_states(self.rng, self.samples)
        (Up[5], Up[6]), (Um[5], Um[6]) = _tangential_fields(self.rng, self.samples)
        pair = lambda_fields(Up, Um, self.config.tolerance.parallel)
        res = np.abs(pair.residual(Up, Um))
        scale = 1.0 + np.abs(pair.lambda_plus) + np.abs(pair.lambda_minus)
        value = float(np.max(res / scale))
        return CheckResult("lambda", value <= 1e-12, value, 1e-12)

    def check_parallel_rejected(self) -> CheckResult:
        """平行切向磁场必须被拒绝"""
        Up, Um = random_states(self.rng, 8), random_states(self.rng, 8)
        Um[5], Um[6] = 2.0 * Up[5], 2.0 * Up[6]
        try:
            lambda_fields(Up, Um, self.config.tolerance.parallel)
        except DegenerateConfiguration:
            return CheckResult("parallel_rejected", True, 0.0, 0.0)
        return CheckResult("parallel_rejected", False, 1.0, 0.0, "平行切向磁场未被拒绝")

    def _boundary_samples(self, count: int):
        """满足程函关系与 U_{H,N} = 0 的边界样本"""
        rng = self.rng
        Up, Um = random_states(rng, count), random_states(rng, count)
        (Up[5], Up[6]), (Um[5], Um[6]) = _tangential_fields(rng, count)
        P2, P3 = rng.uniform(-0.3, 0.3, size=(2, count))
        for U in (Up, Um):
            U[4] = P2 * U[5] + P3 * U[6]
        Pt = Up[1] - Up[2] * P2 - Up[3] * P3
        Um[1] = Pt + Um[2] * P2 + Um[3] * P3
        grads_p = (Pt, rng.uniform(0.5, 2.0, size=count), P2, P3)
        grads_m = (Pt, -rng.uniform(0.5, 2.0, size=count), P2, P3)
        return Up, Um, grads_p, grads_m

    def check_decoupling(self) -> CheckResult:
        """[X1] = 0 时边界二次型等于 2X1⁺[X2 − λX5]；[X1] ≠ 0 时不等"""
        Up, Um, gp, gm = self._boundary_samples(self.samples)
        pair = lambda_fields(Up, Um, self.config.tolerance.parallel)
        Xp = self.rng.standard_normal((8, self.samples))
        Xm = self.rng.standard_normal((8, self.samples))
        Xm[0] = Xp[0]
        form = boundary_quadratic_form(Xp, Xm, pair.lambda_plus, pair.lambda_minus,
                                       Up, Um, gp, gm, self.eos)
        scale = np.maximum(np.maximum(np.abs(form.form), np.abs(form.decoupled)), 1.0)
        value = float(np.max(np.abs(form.difference) / scale))

        Xm[0] = Xp[0] + 1.0
        broken = boundary_quadratic_form(Xp, Xm, pair.lambda_plus, pair.lambda_minus,
                                         Up, Um, gp, gm, self.eos)
        negative = float(np.max(np.abs(broken.difference)))
        ok = value <= 1e-11 and negative > 1e-6
        return CheckResult("decoupling", ok, value, 1e-11, f"[X1] ≠ 0 时差 = {negative:.3e}")

    def check_p_structure(self) -> CheckResult:
        """平面框架与场景近似解框架上的分块结构"""
        frames = [planar_frame(8, 8, 0.1, self.eos)]
        sc = self.scenario
        approx = sc.approx()
        tol = self.config.tolerance
        frames.append(GoodUnknownFrame(approx.Ua, approx.front, sc.eos, sc.diffs, tol.parallel,
                                       tol.kappa_min))
        worst, ok = 0.0, True
        for frame in frames:
            block = p_transform_check(frame)
            worst = max(worst, block.max_deviation)
            ok = ok and block.hypotheses_ok
        return CheckResult("p_structure", ok and worst <= 1e-10, worst, 1e-10,
                           "" if ok else "程函关系或 U_HN = 0 不满足")

    # ===== 光滑算子 =====

    def check_smoothing(self) -> CheckResult:
        """光滑常数（含边界迹常数）随 θ 的漂移不超过 2 倍，带限场为不动点"""
        constants = measure_smoothing_constants(seed=int(self.rng.integers(2 ** 31)))
        drift = constants.max_drift()
        trace_drift = constants.max_drift("trace")
        grid = harness_grid(n2=256)
        u = np.broadcast_to(np.cos(TWO_PI * grid.x2 / grid.L2)[None, None, :, None], grid.shape)
        fixed = float(np.max(np.abs(Smoother(grid).apply(u, 8.0) - u)))
        ok = drift <= 2.0 and trace_drift <= 2.0 and fixed <= 1e-12
        return CheckResult("smoothing", ok, drift, 2.0,
                           f"迹常数漂移 = {trace_drift:.3f}, 不动点误差 = {fixed:.3e}")

    # ===== 线性化与格式 =====

    def check_linearization(self) -> CheckResult:
        study = linearization_study(self.eos, self.rng)
        return CheckResult("linearization", study.min_slope >= 1.9, study.min_slope, 1.9,
                           f"{len(study.checks)} 个配置")

    def check_planar(self) -> CheckResult:
        result = planar_preservation(self.eos)
        return CheckResult("planar", result.max_residual <= 1e-10, result.max_residual, 1e-10,
                           f"{result.steps} 步")

    def check_compat_oracle(self) -> CheckResult:
        """U_1 与一步推进差商一致"""
        sc = self.scenario
        data = build_compat_data(sc.U0, sc.psi0, 1, sc.grid, sc.eos, sc.diffs,
                                 self.config.tolerance.parallel)
        gap = compat_oracle(sc.U0, sc.psi0, sc.grid, sc.eos, sc.diffs,
                            {s: data.U[s][1] for s in SIGNS})
        scale = max(data.rate_norms()[1], 1.0)
        return CheckResult("compat_oracle", gap <= 1e-10 * scale, gap, 1e-10 * scale)

    # ===== 迭代簿记 =====

    def check_telescoping(self) -> CheckResult:
        """随机源项与误差项上的三种伸缩和恒等式"""
        grid = Grid(12, 16, 1, 3.0, TWO_PI, TWO_PI, 0.2, 4)
        family = SmootherFamily(grid, self.config.iteration.theta0)
        worst = 0.0
        for smooth, shape, with_source in (
                (family.S, (8,) + grid.shape, True),
                (family.S_trace, grid.shape, False),
                (family.S_boundary, (5,) + grid.boundary_shape, False)):
            source = self.rng.standard_normal(shape) if with_source else None
            errors: List[np.ndarray] = []
            total = np.zeros(shape)
            for n in range(6):
                total = total + recursion_term(n, smooth, source, errors, shape)
                errors.append(self.rng.standard_normal(shape))
                worst = max(worst, telescoping_residual(n, smooth, source, errors, total))
        return CheckResult("telescoping", worst <= TOL_TELESCOPING, worst, TOL_TELESCOPING)

    def check_iteration_bookkeeping(self) -> CheckResult:
        """短迭代中每步的伸缩和、ē⁽³⁾ 与修正状态约束"""
        settings = self.scenario.settings()
        settings.n_max = min(settings.n_max, self.iteration_steps)
        result = run_iteration(self.scenario.problem(), settings)
        keys = ("telescoping_f", "telescoping_g", "telescoping_h", "modified_constraint")
        worst = max(r.checks[k] for r in result.state.records for k in keys)
        ebar3 = max(r.checks["ebar3_max"] for r in result.state.records)
        tol = max(settings.tol_telescoping, settings.tol_constraint)
        ok = worst <= tol and ebar3 == 0.0
        return CheckResult("iteration_bookkeeping", ok, worst, tol, f"max|ē⁽³⁾| = {ebar3:.3e}")

    def check_newton(self) -> CheckResult:
        """线性化误差 e⁽¹⁾ 随增量幅度的二次性"""
        sc = self.scenario
        problem = sc.problem()
        grid = problem.grid
        rng = self.rng
        t, x1, x2, x3 = grid.mesh()
        chi = x1_cutoff(grid.x1, cutoff_width(grid))[None, :, None, None]
        bump = np.exp(-(x1 - 1.0) ** 2) * np.cos(x2 + rng.uniform(0.0, TWO_PI)) * t * np.ones(grid.shape)
        dV = TwoPhaseField(1e-2 * rng.uniform(-1, 1, (8, 1, 1, 1, 1)) * bump,
                           1e-2 * rng.uniform(-1, 1, (8, 1, 1, 1, 1)) * bump, grid)
        dphi = 1e-2 * t[:, 0] * np.cos(x2[:, 0] + x3[:, 0]) * np.ones(grid.boundary_shape)
        lift = chi * dphi[:, None]
        dPhi = TwoPhaseField(lift, lift.copy(), grid)
        zero_V = TwoPhaseField.zeros(grid)
        zero_Phi = TwoPhaseField.zeros(grid, None)
        slopes = newton_quadraticity(problem, zero_V, zero_Phi, np.zeros(grid.boundary_shape),
                                     dV, dPhi, dphi)
        value = slopes["e1"]
        ok = (abs(value - 2.0) <= 0.1 and abs(slopes["ebar1"] - 2.0) <= 0.1
              and abs(slopes["etilde1"] - 2.0) <= 0.1)
        return CheckResult("newton", ok, value, 2.0,
                           f"ẽ1 斜率 = {slopes['etilde1']:.3f}, ē1 斜率 = {slopes['ebar1']:.3f}")
