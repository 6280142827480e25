"""Build script for the optional compiled kernel core.

The extension accelerates the hot inner loops (1-D convolution forward and
backward, codebook nearest-neighbor search). If the build fails the package
still works: flowvc.kernels falls back to the pure-numpy implementation at
import time.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - build environment without Cython
    cythonize = None

extensions = [
    Extension(
        "flowvc.kernels._kernels_cy",
        sources=["src/flowvc/kernels/_kernels_cy.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(extensions, language_level="3") if cythonize else [],
)
