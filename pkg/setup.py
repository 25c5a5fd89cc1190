"""Build script for the optional compiled kernels.

The extension accelerates the per-realization covariance solver; the
package falls back to the pure-numpy implementation when the build is
unavailable (see wtap._backend).
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext = Extension(
    "wtap._kernels",
    ["src/wtap/_kernels.pyx"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    optional=True,
)

setup(
    ext_modules=cythonize([ext], language_level="3") if cythonize else [],
)
