"""LSTM cell kernels: compiled extension when importable, numpy fallback otherwise.

Set KGAN_FORCE_FALLBACK=1 to force the pure-numpy path (used by tests and the
kernel benchmark).
"""

import os

from . import fallback

BACKEND = "fallback"
_impl = fallback

if os.environ.get("KGAN_FORCE_FALLBACK", "") != "1":
    try:
        from . import _lstm_ext as _impl  # type: ignore[no-redef]

        BACKEND = "ext"
    except ImportError:
        pass

cell_forward = _impl.cell_forward
cell_backward = _impl.cell_backward
