"""Bistable reaction-diffusion on k-ary trees: wave speeds, pinning regions, spatial chaos."""
from .nonlinearity import CUBIC, System, SystemParams, custom, reflect

__all__ = ["CUBIC", "System", "SystemParams", "custom", "reflect"]
__version__ = "0.1.0"
