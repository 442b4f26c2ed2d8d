"""
Work-first work stealing state machine for nested fork-join programs.
"""
