"""Superposition-encoded spiking network robust to image colour inversion."""

from ._accel import backend_name
from .encoder import EncodeConfig, SuperposedImage, superpose
from .trainer import Network, init_network

__all__ = ["EncodeConfig", "Network", "SuperposedImage", "backend_name", "init_network", "superpose"]
__version__ = "0.1.0"
