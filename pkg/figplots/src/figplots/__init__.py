"""Figure rendering for plexpress experiment output directories."""

__version__ = "0.1.0"

from .cli import FIGURE_KINDS, FigureSpec, render  # noqa: F401
