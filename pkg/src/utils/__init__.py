"""工具模块"""
from src.utils.logger import logger
from src.utils.config import Config
from src.utils.exceptions import CrftiwError

__all__ = ['logger', 'Config', 'CrftiwError']
