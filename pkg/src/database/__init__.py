"""
The resilient store: checkpoints, recovery claims and transit records.
"""
