"""Build script: compiles the optional Cython stepping kernels.

The package works without the extension (pure-numpy fallbacks are selected at
import time); building it just makes the Crank-Nicolson tridiagonal stepper
faster.  Pass SNLAB_SKIP_EXT=1 to skip compilation.
"""

import os

import numpy
from setuptools import Extension, setup

if os.environ.get("SNLAB_SKIP_EXT") == "1":
    ext_modules = []
else:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "snlab._kernels",
                sources=["src/snlab/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
