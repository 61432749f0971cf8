"""Build script for the optional compiled graph kernels.

The package works without the extension (a pure-Python fallback is selected
at import time); building it just makes cut-set screening much faster.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # source tree without Cython: ship pure-Python only
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "gridcut._kernels._graphcore",
                ["src/gridcut/_kernels/_graphcore.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
