"""
nfjsim - checkpointing and localized recovery for nested fork-join programs under work stealing.
"""
