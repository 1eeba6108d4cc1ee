"""Two-stage multi-script keyword spotting for text-line images."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
