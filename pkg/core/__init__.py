"""核心业务逻辑模块"""
