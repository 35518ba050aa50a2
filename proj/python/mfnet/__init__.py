"""Thin-section image classification toolkit.

The heavy lifting lives in the `_mfnet` extension module; this package
re-exports its surface.
"""

from _mfnet import *  # noqa: F401,F403
from _mfnet import __doc__  # noqa: F401
