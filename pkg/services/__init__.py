"""服务层模块 - 流水线各阶段的服务"""
