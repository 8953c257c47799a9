import logging
import math
from logging.handlers import RotatingFileHandler

import numpy as np
import pytest

from config.constants import DEFAULT_BACKGROUND_MINUS, DEFAULT_BACKGROUND_PLUS
from config.run_config import RunConfig
from core.eos_state import Eos, Grid, MhdState


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def eos():
    return Eos(gamma=1.4, reference_entropy_scale=1.0)


@pytest.fixture
def small_grid():
    return Grid(8, 8, 1, 3.0, 2.0 * math.pi, 2.0 * math.pi, 0.1, 4)


@pytest.fixture
def background(eos):
    """默认平面电流-涡面两侧的常数态"""
    return (MhdState.from_vector(DEFAULT_BACKGROUND_PLUS, eos),
            MhdState.from_vector(DEFAULT_BACKGROUND_MINUS, eos))


@pytest.fixture
def planar_config():
    return RunConfig.from_text("scenario = planar\n")


@pytest.fixture
def config_file(tmp_path):
    """写出一个最小配置文件并返回路径"""
    def _write(text: str):
        path = tmp_path / "run.cfg"
        path.write_text(text, encoding="utf-8")
        return path
    return _write


@pytest.fixture(autouse=True)
def _isolated_dirs(tmp_path, monkeypatch):
    monkeypatch.setenv("CVS_MHD_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.delenv("CVS_MHD_OUT_DIR", raising=False)
    monkeypatch.delenv("CVS_MHD_THREADS", raising=False)
    yield
    # setup_logger 挂到根记录器上的处理器不跨测试保留
    root = logging.getLogger()
    for handler in root.handlers[:]:
        if isinstance(handler, RotatingFileHandler) or type(handler) is logging.StreamHandler:
            handler.close()
            root.removeHandler(handler)
