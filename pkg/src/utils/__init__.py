"""
Configuration and logging helpers for nfjsim.
"""
