"""
文件操作工具函数
"""
import os
from pathlib import Path
from typing import Iterable, List, Optional, Union

import platformdirs

from config.constants import APP_AUTHOR, APP_NAME, METRICS_CSV

PathLike = Union[str, Path]


def ensure_directory(dir_path: PathLike) -> bool:
    """
    确保目录存在，不存在则创建

    Args:
        dir_path: 目录路径

    Returns:
        是否成功
    """
    try:
        os.makedirs(dir_path, exist_ok=True)
        return True
    except OSError:
        return False


def default_output_dir() -> Path:
    """未配置输出目录时使用的用户数据目录"""
    return Path(platformdirs.user_data_dir(APP_NAME, APP_AUTHOR)) / "runs"


def resolve_output_dir(cli_out: Optional[PathLike], configured: str, command: str) -> Path:
    """
    确定子命令的输出目录

    命令行 --out 优先，其次配置（含 CVS_MHD_OUT_DIR 覆盖），最后是用户数据目录下的子命令目录。
    """
    if cli_out:
        out = Path(cli_out)
    elif configured:
        out = Path(configured)
    else:
        out = default_output_dir() / command
    if not ensure_directory(out):
        raise PermissionError(f"无法创建输出目录: {out}")
    return out


def collect_metric_files(paths: Iterable[PathLike]) -> List[Path]:
    """
    展开指标文件参数：目录取其中的 metrics*.csv，文件原样保留

    Returns:
        去重后按出现顺序排列的文件列表
    """
    files: List[Path] = []
    for item in paths:
        path = Path(item)
        if path.is_dir():
            found = sorted(path.glob(f"{Path(METRICS_CSV).stem}*.csv"))
            files.extend(found)
        else:
            files.append(path)
    unique: List[Path] = []
    for f in files:
        if f not in unique:
            unique.append(f)
    return unique


def format_duration(seconds: float) -> str:
    """格式化秒数为可读字符串"""
    if seconds >= 60:
        return f"{int(seconds // 60)}分{seconds % 60:.0f}秒"
    if seconds >= 1:
        return f"{seconds:.1f}秒"
    return f"{seconds * 1000:.0f}毫秒"
