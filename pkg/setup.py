import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None and os.path.exists("src/crdw/kernels/_native.pyx"):
    extensions = cythonize(
        [
            Extension(
                "crdw.kernels._native",
                ["src/crdw/kernels/_native.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

# the package imports fine without the extension; kernels/__init__ falls
# back to the pure-python implementations
setup(ext_modules=extensions)
