"""Core tensor operations of the RGB-D fusion segmentation library."""

try:
    from ._glpnet import *  # noqa: F401,F403  (installed package layout)
except ImportError:
    from _glpnet import *  # noqa: F401,F403  (build-tree layout)
