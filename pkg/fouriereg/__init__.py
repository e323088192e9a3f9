"""fouriereg - Deformable image registration with band-limited Fourier fields."""

try:
    from importlib.metadata import version

    __version__ = version("fouriereg")
except ImportError:
    __version__ = "unknown"

from .config.settings import NetVariant, Settings
from .core.model import RegistrationModel, build, count_costs

__all__ = [
    "NetVariant",
    "RegistrationModel",
    "Settings",
    "build",
    "count_costs",
    "__version__",
]
