"""Sterile-tray layout planning, pose estimation, assembly sequencing and transport simulation."""
__version__ = "0.1.0"
