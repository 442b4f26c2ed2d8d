"""
Task model for nfjsim: frames, actions, programs and the sequential oracle.
"""
