"""Kernel backend selection.

``KANQ_KERNELS`` picks the implementation: ``auto`` (default) prefers the
compiled extension and falls back to pure NumPy, ``python`` forces the
fallback, ``compiled`` fails loudly if the extension is missing.
"""

import os

_choice = os.environ.get("KANQ_KERNELS", "auto")

if _choice == "python":
    from . import _kernels_py as kernels
elif _choice == "compiled":
    from . import _kernels_cy as kernels  # type: ignore[no-redef]
else:
    try:
        from . import _kernels_cy as kernels  # type: ignore[no-redef]
    except ImportError:
        from . import _kernels_py as kernels  # type: ignore[no-redef]


def backend_name() -> str:
    return kernels.NAME
