"""Build script for the optional compiled kernel backend.

The package is fully functional without the extension (a numpy fallback is
selected at import time); the extension only accelerates the temporal
convolution kernels.
"""

import os

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    extra_args = ["-O3", "-fno-semantic-interposition"]
    if os.environ.get("KINETIC_AGE_PORTABLE", "") != "1":
        extra_args.append("-march=native")
    openmp_args = []
    if os.environ.get("KINETIC_AGE_NO_OPENMP", "") != "1":
        openmp_args = ["-fopenmp"]
    ext_modules = cythonize(
        [
            Extension(
                "kinetic_age.kernels._ctconv",
                ["src/kinetic_age/kernels/_ctconv.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=extra_args + openmp_args,
                extra_link_args=openmp_args,
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython available: install pure-python package only.
    ext_modules = []

setup(ext_modules=ext_modules)
