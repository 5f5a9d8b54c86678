"""lazypaint: masked-canvas image editing that pays compute only for the hole.

A context encoder reads the full masked canvas once and keeps only the
tokens under the mask; a diffusion decoder then denoises just those tokens
and the result is composited back, leaving every pixel outside the mask
untouched.
"""

__version__ = "0.1.0"

from .kernels import backend_name

__all__ = ["backend_name", "__version__"]
