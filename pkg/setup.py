"""Build script for the optional Cython Sinkhorn kernel.

The package works without the extension (a NumPy fallback is selected at
import time); building it just makes large relabeling runs faster.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "intentot.ot._sinkhorn_cy",
                ["src/intentot/ot/_sinkhorn_cy.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
