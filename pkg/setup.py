"""Build script: compiles the range-coder hot kernel when a toolchain is available.

The package is fully functional without the extension; the codec falls back
to the pure-Python twin at import time.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/residiff/codec/_rc.pyx",
        language_level=3,
        compiler_directives={"boundscheck": False, "wraparound": False},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
