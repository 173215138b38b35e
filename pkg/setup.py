"""Build script for the optional compiled scoring kernel.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile only costs speed, never functionality.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "indexkit.kernels._fastscore",
                sources=["src/indexkit/kernels/_fastscore.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
