"""配置模块"""
from .constants import *
from .run_config import *
