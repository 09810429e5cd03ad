"""plite: train, prune, quantize, export and benchmark small CNNs."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
