"""Portrait hair/face segmentation, guided-filter refinement and skin-tone grading."""

from ._hlseg import *  # noqa: F401,F403
from ._hlseg import __doc__ as _native_doc  # noqa: F401

__version__ = "0.1.0"
