"""Build script for the optional compiled kernels.

The package is fully functional without the extension (a numpy fallback is
selected at import time); building it just makes the hot series-convolution
and constant-sweep loops faster.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [Extension("hadalab._accel", ["src/hadalab/_accel.pyx"])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:  # no Cython at build time: pure-python install
    extensions = []

setup(ext_modules=extensions)
