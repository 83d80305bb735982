"""Scale-search domain adaptation toolkit for LiDAR 3D detection."""

__version__ = "0.1.0"
