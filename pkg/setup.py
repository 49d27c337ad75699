"""Build script: compiles the Runge-Kutta stepping kernel as a C extension.

The package works without the extension (a pure-numpy fallback is selected
at import time), so failure to cythonize only costs speed.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("PMX_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "perimax._kernel",
                    ["src/perimax/_kernel.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
