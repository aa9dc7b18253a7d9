"""Build the optional compiled cell kernel.

The package works without it; flamekit.cells.kernel falls back to the pure
Python twin when the extension is missing or FLAMEKIT_PURE_PYTHON is set.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "flamekit.cells._kernel",
                sources=["src/flamekit/cells/_kernel.pyx"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
