"""Build script: compiles the optional solver core extension.

The package works without the extension (a pure numpy backend is selected at
import time), so any failure here degrades to a warning instead of breaking
the install.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler or toolchain missing
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        sys.stderr.write(
            "warning: compiled solver core not built (%s); "
            "falling back to the pure numpy backend\n" % (exc,)
        )


def make_extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError as exc:
        sys.stderr.write("warning: %s; skipping compiled solver core\n" % (exc,))
        return []
    ext = Extension(
        "smal._solver_core",
        sources=["src/smal/_solver_core.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


setup(
    ext_modules=make_extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
