"""
常量定义
"""
import math
from typing import Any, Dict, Tuple

# ===== 应用信息 =====
APP_NAME = "cvs-mhd-lab"
APP_AUTHOR = "cvs-mhd-lab"
APP_VERSION = "0.1.0"
APP_DESCRIPTION = "可压缩电流-涡面数值实验室"

# ===== 环境变量 =====
ENV_THREADS = "CVS_MHD_THREADS"
ENV_LOG_DIR = "CVS_MHD_LOG_DIR"
ENV_OUT_DIR = "CVS_MHD_OUT_DIR"
THREAD_ENV_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

# ===== 状态分量 =====
# U = (p, v1, v2, v3, H1, H2, H3, S)，代码中 0 起始
STATE_COMPONENTS: Tuple[str, ...] = ("p", "v1", "v2", "v3", "H1", "H2", "H3", "S")
N_COMPONENTS = 8
IDX_P = 0
IDX_V = slice(1, 4)
IDX_H = slice(4, 7)
IDX_S = 7

# ===== 物理默认值 =====
DEFAULT_GAMMA = 1.4
DEFAULT_ENTROPY_SCALE = 1.0

# 平面电流-涡面背景态 (p, v1, v2, v3, H1, H2, H3, S)
DEFAULT_BACKGROUND_PLUS = (1.0, 0.0, 0.2, 0.0, 0.0, 1.0, 0.5, 0.0)
DEFAULT_BACKGROUND_MINUS = (1.0, 0.0, -0.2, 0.0, 0.0, 0.5, 1.0, -0.5)

# ===== 数值格式 =====
DEFAULT_CFL = 0.45
SPEED_SAFETY_FACTOR = 1.25          # Rusanov 耗散速度的安全系数
FRONT_SPEED_FACTOR = 1.5            # 前沿切向耗散速度 β = 1.5·max|v| + 0.05
FRONT_SPEED_FLOOR = 0.05
DEFAULT_KAPPA_MIN = 0.5
DEFAULT_COLLAR_FRACTION = 0.25
DEFAULT_TOL_PARALLEL = 1e-8
LINEARIZATION_REL_STEP = 1e-6       # 有限差分线性化的相对步长
COMPAT_FD_STEP = 1e-5               # 相容性数据二阶导数的差分步长
CUTOFF_WIDTH_MAX = 1.0              # x1 方向截断函数的最大宽度

# ===== 迭代默认值 =====
DEFAULT_THETA0 = 4.0
DEFAULT_N_MAX = 15
DEFAULT_S_LIST = (0, 2, 4)
DEFAULT_S0 = 4
DEFAULT_ALPHA = 8
DEFAULT_S1 = 13
DIVERGENCE_PATIENCE = 5
DEFAULT_FIT_START = 2               # 增量指数拟合跳过的前几步（整体求解与其二次误差）

# ===== 初始扰动 =====
DEFAULT_X1_MAX = 6.0
DEFAULT_PERTURBATION_CENTER = 3.0
DEFAULT_PERTURBATION_WIDTH = 0.6
DEFAULT_N_MODES = 8
DEFAULT_SPECTRAL_DECAY = 3.5        # 第 m 个切向模的 s0 阶范数 ∝ m^{-decay}

# ===== 容差 =====
TOL_CONSTRAINT = 1e-10
TOL_TELESCOPING = 1e-10
TOL_SYMMETRY = 1e-12
TOL_COMPAT = 1e-8

# ===== 输出 =====
CSV_FLOAT_FORMAT = "%.12e"
METRICS_CSV = "metrics.csv"
SUMMARY_JSON = "summary.json"
PLOT_DATA_PREFIX = "plot_"
OUTPUT_FORMATS = ("csv", "json", "dat")

# ===== 退出码 =====
EXIT_OK = 0
EXIT_INVARIANT_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3

# ===== 场景预设 =====
SCENARIO_NAMES = ("planar", "perturbed-2d", "perturbed-3d")
DEFAULT_SCENARIO = "perturbed-2d"

# 预设以点号键表示，显式写出的配置项覆盖预设
SCENARIO_PRESETS: Dict[str, Dict[str, Any]] = {
    "planar": {
        "grid.n1": 16,
        "grid.n2": 16,
        "grid.n3": 8,
        "grid.x1_max": 3.0,
        "time.T": 0.2,
        "perturbation.amplitude": 0.0,
        "perturbation.front_amplitude": 0.0,
        "iteration.n_max": 3,
    },
    "perturbed-2d": {
        "grid.n1": 64,
        "grid.n2": 32,
        "grid.n3": 1,
        "grid.x1_max": DEFAULT_X1_MAX,
        "time.T": 0.2,
        "perturbation.amplitude": 1e-3,
        "perturbation.mode2": 1,
        "perturbation.mode3": 0,
        "iteration.n_max": 15,
    },
    "perturbed-3d": {
        "grid.n1": 32,
        "grid.n2": 16,
        "grid.n3": 16,
        "grid.x1_max": DEFAULT_X1_MAX,
        "time.T": 0.1,
        "perturbation.amplitude": 1e-3,
        "perturbation.mode2": 1,
        "perturbation.mode3": 1,
        "iteration.n_max": 8,
    },
}

TWO_PI = 2.0 * math.pi


def scenario_preset(name: str) -> Dict[str, Any]:
    """获取场景预设（副本）"""
    return dict(SCENARIO_PRESETS.get(name, {}))
