"""CRFTIW - 带协变量调整的平移不变小波函数型数据聚类"""
__version__ = "0.1.0"
