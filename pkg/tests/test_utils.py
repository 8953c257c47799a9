import logging
import os
from datetime import datetime, timedelta

from utils.file_utils import collect_metric_files, format_duration, resolve_output_dir
from utils.logger import LOG_FILE_PREFIX, cleanup_old_logs, resolve_log_dir, setup_logger


def test_output_dir_precedence(tmp_path, monkeypatch):
    cli = tmp_path / "cli"
    configured = tmp_path / "configured"
    assert resolve_output_dir(cli, str(configured), "check") == cli
    assert cli.is_dir()
    assert resolve_output_dir(None, str(configured), "check") == configured

    monkeypatch.setattr("utils.file_utils.default_output_dir", lambda: tmp_path / "data")
    assert resolve_output_dir(None, "", "iterate") == tmp_path / "data" / "iterate"


def test_collect_metric_files(tmp_path):
    (tmp_path / "metrics.csv").write_text("theta,delta\n", encoding="utf-8")
    (tmp_path / "metrics_2.csv").write_text("theta,delta\n", encoding="utf-8")
    (tmp_path / "energy.csv").write_text("s\n", encoding="utf-8")
    extra = tmp_path / "other.csv"
    files = collect_metric_files([tmp_path, tmp_path / "metrics.csv", extra])
    assert files == [tmp_path / "metrics.csv", tmp_path / "metrics_2.csv", extra]


def test_format_duration():
    assert format_duration(0.25) == "250毫秒"
    assert format_duration(2.5) == "2.5秒"
    assert format_duration(125) == "2分5秒"


def test_log_dir_from_environment(tmp_path):
    # conftest 已把 CVS_MHD_LOG_DIR 指向 tmp_path/logs
    assert resolve_log_dir() == str(tmp_path / "logs")
    assert resolve_log_dir(str(tmp_path / "explicit")) == str(tmp_path / "explicit")


def test_setup_logger_writes_run_log(tmp_path):
    root = setup_logger(quiet=True)
    logging.getLogger("cvs.test").info("写入测试")
    for handler in root.handlers:
        handler.flush()
    log_files = list((tmp_path / "logs").glob(f"{LOG_FILE_PREFIX}*.log"))
    assert len(log_files) == 1
    assert "写入测试" in log_files[0].read_text(encoding="utf-8")
    console = [h for h in root.handlers if type(h) is logging.StreamHandler]
    assert console[0].level == logging.WARNING


def test_cleanup_old_logs(tmp_path):
    log_dir = tmp_path / "old_logs"
    log_dir.mkdir()
    old = log_dir / f"{LOG_FILE_PREFIX}{datetime.now() - timedelta(days=40):%Y%m%d}.log"
    recent = log_dir / f"{LOG_FILE_PREFIX}{datetime.now():%Y%m%d}.log"
    odd = log_dir / f"{LOG_FILE_PREFIX}latest.log"
    for path in (old, recent, odd):
        path.write_text("x", encoding="utf-8")
    assert cleanup_old_logs(str(log_dir), days=30) == 1
    assert not old.exists()
    assert recent.exists() and odd.exists()
    assert os.listdir(log_dir)
