"""
Point cloud ray launcher: deterministic radio propagation paths traced
directly on labeled point clouds.
"""

__version__ = "1.0.0"
