"""Builds the optional Cython convolution kernels.

The kernels call BLAS through scipy's Cython bindings.  Without Cython,
scipy or a C compiler the package installs pure-Python and falls back to
the numpy kernels at import time.
"""
from setuptools import setup

ext_modules = []
try:
    import numpy as np
    import scipy.linalg.cython_blas  # noqa: F401  (build-time pxd source)
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "uwbsel.nn._conv_ext",
                ["src/uwbsel/nn/_conv_ext.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
