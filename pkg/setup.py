"""Build the optional compiled kernels.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile degrades to a source-only install rather
than aborting.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "airsgd._kernels",
                ["src/airsgd/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception:  # pragma: no cover - exercised only on broken toolchains
    extensions = []

setup(ext_modules=extensions)
