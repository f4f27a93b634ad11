"""Build script: compiles the optional active-set QP kernel.

The package is fully functional without the extension (a pure numpy
fallback with identical semantics is selected at import), so any failure
to build or import Cython degrades to a pure-Python install instead of
aborting.
"""

import os

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    if not os.path.exists("src/mpvc/_qp_kernel.pyx"):
        raise ImportError
    ext_modules = cythonize(
        [
            Extension(
                "mpvc._qp_kernel",
                ["src/mpvc/_qp_kernel.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
