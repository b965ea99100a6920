"""配置管理模块"""
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union
import yaml
from dotenv import load_dotenv, dotenv_values

from src.utils.exceptions import ConfigError

# 加载环境变量
load_dotenv()


class Config:
    """配置类"""

    # 项目根目录
    ROOT_DIR = Path(__file__).parent.parent.parent

    # 数据目录
    DATA_DIR = ROOT_DIR / "data"
    LOG_DIR = DATA_DIR / "logs"

    # 默认输出目录（只有这一项允许用环境变量覆盖）
    OUTPUT_DIR = Path(os.getenv("CRFTIW_OUTPUT_DIR", str(DATA_DIR / "output")))

    # benchmark 并行进程数
    N_JOBS = int(os.getenv("CRFTIW_N_JOBS", "1"))

    DEFAULTS_FILE = ROOT_DIR / "config" / "defaults.yaml"

    @classmethod
    def ensure_dirs(cls, *extra: Path):
        """确保必要的目录存在"""
        for dir_path in [cls.DATA_DIR, cls.LOG_DIR, *extra]:
            Path(dir_path).mkdir(parents=True, exist_ok=True)

    @classmethod
    def load_defaults(cls) -> Dict[str, Any]:
        """加载 config/defaults.yaml 中的默认参数"""
        if cls.DEFAULTS_FILE.exists():
            with open(cls.DEFAULTS_FILE, 'r', encoding='utf-8') as f:
                return yaml.safe_load(f) or {}
        return {}

    @classmethod
    def section(cls, name: str) -> Dict[str, Any]:
        """取 defaults.yaml 的某一节，不存在时返回空字典"""
        return dict(cls.load_defaults().get(name) or {})

    @classmethod
    def load_flat_config(cls, path: Optional[Union[str, Path]]) -> Dict[str, str]:
        """
        读取扁平的 key = value 配置文件

        Args:
            path: 配置文件路径，None 时返回空字典

        Returns:
            键统一转成小写、'-' 换成 '_' 的字典
        """
        if path is None:
            return {}
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"配置文件不存在: {path}")
        values = dotenv_values(path)
        return {
            key.strip().lower().replace('-', '_'): value
            for key, value in values.items()
            if value is not None and value != ""
        }
