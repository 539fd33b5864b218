"""Cardiac ultrasound segmentation benchmark harness.

The heavy lifting lives in the C++ extension ``_echoseg``; importing torch
first makes sure the shared libtorch runtime the extension links against is
loaded.
"""

import os
import sys

import torch  # noqa: F401  (loads libtorch for the extension)

_ext_dir = os.environ.get("ECHOSEG_EXT_DIR")
if _ext_dir and _ext_dir not in sys.path:
    sys.path.insert(0, _ext_dir)

try:
    from ._echoseg import *  # noqa: F401,F403  (installed layout)
    from ._echoseg import __doc__ as _doc
except ImportError:  # in-tree build: extension sits on sys.path
    from _echoseg import *  # noqa: F401,F403
    from _echoseg import __doc__ as _doc

__doc__ = _doc
__version__ = "0.1.0"
