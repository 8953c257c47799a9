#!/usr/bin/env python3
"""
可压缩电流-涡面数值实验室
cvs-mhd-lab

子命令:
    check    不变量检验套件
    linear   线性化问题的构造解、能量常数与 ∇·H 研究
    iterate  Nash-Moser 迭代
    report   对指标文件做幂律拟合
"""
import argparse
import logging
import os
import sys
import time
from typing import List, Optional

APP_DIR = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, APP_DIR)

U64_MAX = 2 ** 64 - 1


def apply_thread_limit() -> Optional[str]:
    """
    按 CVS_MHD_THREADS 限制 BLAS/FFT 线程数

    必须在导入 numpy 之前调用。
    """
    from config.constants import ENV_THREADS, THREAD_ENV_VARS

    threads = os.environ.get(ENV_THREADS)
    if not threads:
        return None
    if not threads.isdigit() or int(threads) < 1:
        print(f"[WARNING] 忽略非法的 {ENV_THREADS}={threads}", file=sys.stderr)
        return None
    for name in THREAD_ENV_VARS:
        os.environ[name] = threads
    return threads


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"种子必须为整数: {text}")
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError(f"种子必须在 [0, 2^64) 内: {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    from config.constants import APP_DESCRIPTION, APP_NAME, APP_VERSION

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="配置文件路径（key = value 格式）")
    common.add_argument("--out", help="输出目录，覆盖配置与 CVS_MHD_OUT_DIR")
    common.add_argument("--seed", type=_seed, help="随机种子，覆盖 perturbation.seed")
    common.add_argument("--quiet", action="store_true", help="控制台只输出警告与错误")

    parser = argparse.ArgumentParser(prog=APP_NAME, description=APP_DESCRIPTION)
    parser.add_argument("--version", action="version", version=f"%(prog)s {APP_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="运行不变量检验套件")
    sub.add_parser("linear", parents=[common], help="线性化问题研究")
    sub.add_parser("iterate", parents=[common], help="运行 Nash-Moser 迭代")
    report = sub.add_parser("report", parents=[common], help="拟合指标文件中的衰减指数")
    report.add_argument("metrics", nargs="*", help="指标 CSV 文件或目录（缺省为输出目录）")
    return parser


def cmd_check(config, seed: int, service) -> int:
    import pandas as pd

    from core.error_handler import invariant_exit_code
    from core.invariant_suite import InvariantSuite

    report = InvariantSuite(config, seed=seed).run()
    service.write_checks(report)
    table = pd.DataFrame(report.rows())
    print(table.to_string(index=False))
    if report.passed:
        print(f"全部 {len(report.results)} 项检验通过")
    else:
        print(f"未通过的检验: {', '.join(report.failed)}")
    return invariant_exit_code(report.passed)


def cmd_linear(config, seed: int, service) -> int:
    import numpy as np

    from config.constants import EXIT_OK
    from core.eos_state import Eos
    from core.report_service import LinearResults
    from core.studies import (
        divergence_study,
        energy_study,
        linearization_study,
        manufactured_study,
        stability_study,
    )

    logger = logging.getLogger(__name__)
    eos = Eos(config.eos.gamma, config.eos.reference_entropy_scale)
    rng = np.random.default_rng(seed)
    cfl = config.time.cfl
    results = LinearResults(
        manufactured=manufactured_study(eos, cfl=cfl),
        energy=energy_study(eos, cfl=cfl),
        divergence=divergence_study(eos, cfl=cfl),
        stability=stability_study(eos, rng, cfl=cfl),
        linearization=linearization_study(eos, rng),
    )
    service.write_linear(results)

    order = results.manufactured.min_order
    gap_order = results.manufactured.min_gap_order
    div_order = min(r.order for r in results.divergence[1:]) if len(results.divergence) > 1 else float("nan")
    print(f"构造解最小收敛阶: {order:.3f}")
    print(f"两侧一致性间隙最小收敛阶: {gap_order:.3f}")
    print(f"∇·H 最小收敛阶: {div_order:.3f}")
    print(f"能量常数漂移倍数: {results.energy.drift:.3f}")
    print(f"离散能量增长倍数: {results.stability.growth:.3f}")
    print(f"线性化最小斜率: {results.linearization.min_slope:.3f}")
    if not min(order, gap_order, div_order) >= 0.8:
        logger.warning("存在低于 0.8 的收敛阶，请检查网格与 CFL 数")
    return EXIT_OK


def cmd_iterate(config, seed: int, service) -> int:
    from config.constants import EXIT_NUMERICAL_ERROR, EXIT_OK
    from core.exceptions import IterationDiverged
    from core.nash_moser import run_iteration
    from core.scenarios import build_scenario

    logger = logging.getLogger(__name__)
    started = time.perf_counter()
    scenario = build_scenario(config, seed)
    settings = scenario.settings()
    diverged = None
    try:
        result = run_iteration(scenario.problem(), settings)
    except IterationDiverged as e:
        if e.history is None:
            raise
        diverged = e
        result = e.history
    wall_time = time.perf_counter() - started

    service.write_iteration(result, settings, scenario.name, seed, wall_time, config.to_dict())
    report = result.report
    print(f"迭代步数: {report.steps}")
    print(f"残差比 (n={report.steps} / n=0): {report.residual_ratio:.3e}")
    print(f"残差衰减指数: {report.residual_slope:.3f}")
    s0 = settings.s0
    print(f"‖δV‖_{s0} 衰减指数: {report.increment_slopes.get(s0, float('nan')):.3f} "
          f"(参考 {report.reference_slopes.get(s0, float('nan')):.3f})")
    print(f"收敛: {report.converged}")
    if diverged is not None:
        logger.error(f"迭代发散，已写出 {report.steps} 步的部分数据: {diverged.message}")
        return EXIT_NUMERICAL_ERROR
    return EXIT_OK


def cmd_report(config, metrics: List[str], service) -> int:
    from config.constants import EXIT_OK
    from core.report_service import fit_metric_files
    from utils.file_utils import collect_metric_files

    files = collect_metric_files(metrics or [service.out_dir])
    fits = fit_metric_files(files, config.iteration.s0, config.iteration.alpha,
                            start=config.iteration.fit_start)
    service.write_fits(fits)
    print(fits.to_string(index=False))
    return EXIT_OK


def _main_inner(argv: Optional[List[str]] = None) -> int:
    """实际入口，返回退出码"""
    apply_thread_limit()
    args = build_parser().parse_args(argv)

    from utils.logger import setup_logger, cleanup_old_logs
    setup_logger(quiet=args.quiet)
    cleanup_old_logs(days=30)
    logger = logging.getLogger(__name__)

    from config.run_config import load_run_config
    from core.error_handler import get_error_handler
    from core.exceptions import CvsLabError
    from core.report_service import ReportService
    from utils.file_utils import format_duration, resolve_output_dir

    logger.info(f"子命令 {args.command} 启动")
    started = time.perf_counter()
    try:
        config = load_run_config(args.config)
        seed = args.seed if args.seed is not None else config.perturbation.seed
        out_dir = resolve_output_dir(args.out, config.output.directory, args.command)
        service = ReportService(out_dir, config.output.formats)
        if args.command == "check":
            code = cmd_check(config, seed, service)
        elif args.command == "linear":
            code = cmd_linear(config, seed, service)
        elif args.command == "iterate":
            code = cmd_iterate(config, seed, service)
        else:
            code = cmd_report(config, args.metrics, service)
    except (CvsLabError, OSError, FloatingPointError, MemoryError) as e:
        handler = get_error_handler()
        info = handler.handle_error(e, context=args.command)
        print(handler.format_message(info), file=sys.stderr)
        return info.exit_code

    logger.info(f"子命令 {args.command} 结束，退出码: {code}，"
                f"耗时 {format_duration(time.perf_counter() - started)}，输出目录: {out_dir}")
    return code


def main(argv: Optional[List[str]] = None) -> int:
    """程序入口，包裹未预期异常"""
    try:
        code = _main_inner(argv)
    except Exception:
        import traceback
        logging.getLogger(__name__).critical(f"未捕获异常:\n{traceback.format_exc()}")
        code = 3
    logging.shutdown()
    return code


if __name__ == "__main__":
    sys.exit(main())
