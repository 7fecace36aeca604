"""Numba toggle.

Hot kernels in ``_kernels`` are JIT-compiled unless the environment
variable ``CAUSALPRUNE_NUMBA`` is set to ``0``/``false``/``off`` (or numba
is not importable), in which case the pure-numpy fallbacks are used.
"""

import os

_flag = os.environ.get("CAUSALPRUNE_NUMBA", "1").strip().lower()
NUMBA_ENABLED = _flag not in ("0", "false", "off", "no")

if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay importable
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:
    def njit(*args, **kwargs):  # noqa: D103 - decorator stand-in
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap
