"""Selects the compiled cell kernel when available, else the pure-Python twin.

Set FLAMEKIT_PURE_PYTHON=1 to force the fallback (used by the benchmark and
by CI to exercise both paths).
"""

import os

if os.environ.get("FLAMEKIT_PURE_PYTHON"):
    from flamekit.cells._kernel_py import *  # noqa: F401,F403
else:
    try:
        from flamekit.cells._kernel import *  # noqa: F401,F403
    except ImportError:
        from flamekit.cells._kernel_py import *  # noqa: F401,F403
