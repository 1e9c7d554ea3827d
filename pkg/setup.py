"""Build script for the optional compiled kernels.

If Cython or a C compiler is missing the package still installs and the
numpy fallback in ``fdpwave._fallback`` is used at import time.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("FDPWAVE_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "fdpwave._kernels",
                    ["src/fdpwave/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
