"""Build shim for the optional compiled simulation kernels.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so a failing C toolchain must not fail the install.
"""
import os

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if we can, warn and continue if we cannot."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # toolchain missing or broken
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        import warnings

        warnings.warn(
            "sptlab: compiled kernels unavailable, falling back to pure "
            f"numpy backend ({exc})"
        )


extensions = [
    Extension(
        "sptlab._kernels",
        ["src/sptlab/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

if os.environ.get("SPTLAB_SKIP_EXT"):
    extensions = []
else:
    from Cython.Build import cythonize

    extensions = cythonize(extensions, compiler_directives={"language_level": "3"})

setup(
    ext_modules=extensions,
    cmdclass={"build_ext": optional_build_ext},
)
