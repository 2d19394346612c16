"""Build script: compiles the hot-loop engine when Cython is available.

The package works without the compiled extension (a pure-Python engine is
selected at import time), so a failed build is not fatal.
"""

import os

from setuptools import Extension, setup

_PYX = os.path.join("src", "quadhop", "_engine.pyx")

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None and os.path.exists(_PYX):
    extensions = cythonize(
        [Extension("quadhop._engine", [_PYX], extra_compile_args=["-O3"])],
        language_level=3,
    )
else:
    extensions = []

setup(ext_modules=extensions)
