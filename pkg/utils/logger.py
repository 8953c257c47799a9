"""
日志系统配置 - 支持日志轮转与旧日志清理
"""
import glob
import logging
import os
import tempfile
from datetime import datetime, timedelta
from logging.handlers import RotatingFileHandler
from typing import List, Optional

import platformdirs

from config.constants import APP_AUTHOR, APP_NAME, ENV_LOG_DIR

LOG_FILE_PREFIX = "run_"


def _candidate_dirs(log_dir: Optional[str]) -> List[str]:
    """日志目录候选：显式参数 > 环境变量 > 用户日志目录 > 临时目录"""
    dirs = []
    if log_dir:
        dirs.append(log_dir)
    env_dir = os.getenv(ENV_LOG_DIR)
    if env_dir:
        dirs.append(env_dir)
    dirs.append(platformdirs.user_log_dir(APP_NAME, APP_AUTHOR))
    dirs.append(os.path.join(tempfile.gettempdir(), f"{APP_NAME}_logs"))
    return dirs


def resolve_log_dir(log_dir: Optional[str] = None) -> Optional[str]:
    """返回第一个可写的日志目录，全部失败时返回 None"""
    for try_dir in _candidate_dirs(log_dir):
        try:
            os.makedirs(try_dir, exist_ok=True)
            return try_dir
        except (PermissionError, OSError):
            continue
    return None


def _reset_handlers(root_logger: logging.Logger):
    for h in root_logger.handlers[:]:
        h.close()
        root_logger.removeHandler(h)


def setup_logger(log_dir: Optional[str] = None, quiet: bool = False) -> logging.Logger:
    """
    配置根日志记录器

    Args:
        log_dir: 日志目录，缺省时依次尝试 CVS_MHD_LOG_DIR、用户日志目录与临时目录
        quiet: 控制台只输出 WARNING 及以上

    Returns:
        配置好的根日志记录器
    """
    console_level = logging.WARNING if quiet else logging.INFO
    console_handler = logging.StreamHandler()
    console_handler.setLevel(console_level)
    console_handler.setFormatter(logging.Formatter('[%(levelname)s] %(message)s'))

    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)
    _reset_handlers(root_logger)

    actual_log_dir = resolve_log_dir(log_dir)
    if actual_log_dir is None:
        root_logger.addHandler(console_handler)
        root_logger.warning("无法创建日志目录，仅使用控制台输出")
        return root_logger

    log_file = os.path.join(actual_log_dir, f'{LOG_FILE_PREFIX}{datetime.now():%Y%m%d}.log')
    file_handler = None
    try:
        file_handler = RotatingFileHandler(
            log_file,
            maxBytes=5 * 1024 * 1024,  # 5MB
            backupCount=5,
            encoding='utf-8'
        )
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(
            '%(asctime)s [%(levelname)s] %(name)s: %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        ))
    except (PermissionError, OSError) as e:
        root_logger.addHandler(console_handler)
        root_logger.warning(f"无法创建日志文件: {e}")
        return root_logger

    root_logger.addHandler(file_handler)
    root_logger.addHandler(console_handler)
    root_logger.debug(f"日志系统已初始化，日志文件: {log_file}")
    return root_logger


def cleanup_old_logs(log_dir: Optional[str] = None, days: int = 30) -> int:
    """
    清理超过指定天数的旧日志文件

    Args:
        log_dir: 日志目录
        days: 保留天数

    Returns:
        删除的文件数
    """
    log_dir = resolve_log_dir(log_dir)
    if log_dir is None or not os.path.exists(log_dir):
        return 0

    cutoff_date = datetime.now() - timedelta(days=days)
    logger = logging.getLogger(__name__)
    removed = 0

    for log_file in glob.glob(os.path.join(log_dir, f'{LOG_FILE_PREFIX}*.log*')):
        filename = os.path.basename(log_file)
        date_str = filename[len(LOG_FILE_PREFIX):len(LOG_FILE_PREFIX) + 8]  # run_YYYYMMDD.log
        try:
            file_date = datetime.strptime(date_str, '%Y%m%d')
            if file_date < cutoff_date:
                os.remove(log_file)
                removed += 1
                logger.debug(f"已删除旧日志文件: {log_file}")
        except (ValueError, OSError) as e:
            logger.warning(f"清理日志文件时出错: {log_file}, {e}")
    return removed
