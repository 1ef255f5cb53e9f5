"""Boundary-layer expansion toolkit for steady 2D incompressible MHD."""

__version__ = "0.1.0"
