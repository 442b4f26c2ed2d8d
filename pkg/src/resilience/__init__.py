"""
Checkpointing, resilient steal / frame return protocols and buddy recovery.
"""
