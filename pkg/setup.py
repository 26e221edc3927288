"""Build script: compiles the optional Cython kernel core.

The package works without the extension (a pure-Python fallback is selected at
import time), so a missing compiler or EBSSA_PURE_PYTHON=1 degrades the build
to pure mode instead of failing it.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("EBSSA_PURE_PYTHON") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        # -ffp-contract=off keeps float results bit-identical to the
        # pure-Python fallback (no surprise FMA contraction); -march=native
        # only vectorizes independent lanes, which is IEEE-safe.
        flags = ["-O3", "-ffp-contract=off"]
        if os.environ.get("EBSSA_PORTABLE") != "1":
            flags.append("-march=native")
        ext = Extension(
            "ebssa._kernels._core",
            sources=["src/ebssa/_kernels/_core.pyx"],
            include_dirs=[numpy.get_include()],
            extra_compile_args=flags,
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext_modules = cythonize([ext], language_level=3)
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
