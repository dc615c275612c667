"""
ketra: вложения графов знаний тензорной факторизацией, обогащенной сходством отношений
"""
__version__ = '1.0.0'
