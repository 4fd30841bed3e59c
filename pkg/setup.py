"""Build script for the optional compiled convolution kernels.

Set GROUPDECODE_NO_EXT=1 to skip building the extension; the package
falls back to the pure-numpy kernels at import time.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("GROUPDECODE_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/groupdecode/nn/_convkernels.pyx"],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
    for ext in ext_modules:
        ext.extra_compile_args = ["-O3"]

setup(ext_modules=ext_modules)
