"""工具函数模块"""
from .file_utils import *
