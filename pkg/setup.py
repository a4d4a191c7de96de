"""Build the optional compiled kernels.

The package works without them: ``delayopt.kernels`` falls back to the
pure-Python implementation when the extension cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("DELAYOPT_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "delayopt._kernels",
                    ["src/delayopt/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no -ffast-math: the fallback must agree bit for bit
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
