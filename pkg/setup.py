"""Build script for the optional compiled kernel backend.

The package is pure Python plus one Cython extension
(``actorinfer.backends._core``) holding the hot numerical kernels.
The extension is marked optional: if no C compiler (or Cython) is
available the install still succeeds and the package falls back to the
NumPy reference backend at import time.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    ext = Extension(
        "actorinfer.backends._core",
        ["src/actorinfer/backends/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        optional=True,
    )
    extensions = cythonize(
        [ext],
        language_level=3,
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=extensions)
