"""Build script for the optional compiled grid kernels.

The package works without the extension (a pure-Python fallback is selected
at import time); building it just makes the per-tick grid work fast.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "fleetmux.kernels._gridcore",
        sources=["src/fleetmux/kernels/_gridcore.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    )
)
