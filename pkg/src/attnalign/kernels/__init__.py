"""Kernel backend selection.

The compiled Cython extension is preferred when importable; otherwise
the numpy fallback is used.  Set ATTNALIGN_KERNELS=numpy or =compiled
to force a backend (forcing the compiled one raises if it is missing).

Both backends implement the same six functions with matching semantics;
results agree to floating-point roundoff but are not guaranteed to be
bit-identical across backends.  All determinism contracts in the rest
of the package hold within a single backend.
"""

import os

from attnalign.errors import ConfigError
from attnalign.kernels import _numpy


def _select():
    forced = os.environ.get("ATTNALIGN_KERNELS", "").strip().lower()
    if forced not in ("", "numpy", "compiled"):
        raise ConfigError(
            f"ATTNALIGN_KERNELS must be 'numpy' or 'compiled', got {forced!r}")
    if forced == "numpy":
        return _numpy
    try:
        from attnalign.kernels import _compiled
        return _compiled
    except ImportError:
        if forced == "compiled":
            raise ConfigError(
                "ATTNALIGN_KERNELS=compiled but the extension is not built; "
                "reinstall with a C toolchain available")
        return _numpy


_impl = _select()

BACKEND = _impl.NAME
lstm_gates_forward = _impl.lstm_gates_forward
lstm_gates_backward = _impl.lstm_gates_backward
masked_softmax_forward = _impl.masked_softmax_forward
masked_softmax_backward = _impl.masked_softmax_backward
softmax_nll_forward = _impl.softmax_nll_forward
softmax_nll_backward = _impl.softmax_nll_backward
