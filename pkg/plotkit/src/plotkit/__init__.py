"""Figure rendering for the scheduling experiment CSV outputs.

This package only draws what the experiment CLI emitted; it never
recomputes model quantities.
"""

from .figures import FigureSpec, SchemaError, render

__all__ = ["FigureSpec", "SchemaError", "render"]
__version__ = "0.1.0"
