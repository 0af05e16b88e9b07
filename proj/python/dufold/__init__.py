"""Deep-unfolded conditional diffusion sampling for linear inverse problems."""

try:
    from ._dufold import *  # noqa: F401,F403  (installed layout)
except ImportError:
    from _dufold import *  # noqa: F401,F403  (build-tree layout)

__version__ = "0.1.0"
