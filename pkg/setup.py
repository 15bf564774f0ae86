"""Build script for the optional compiled rasterizer kernel.

The package is fully functional without the extension (a numpy fallback is
selected at import time); the build therefore tolerates a missing compiler
or Cython and produces a pure-Python install in that case.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


# -ffp-contract=off keeps the C arithmetic bit-identical to the numpy
# fallback (no FMA contraction); -ffast-math would break the +inf depth
# buffer sentinel and must never be added.
EXT_COMPILE_ARGS = ["-O3", "-ffp-contract=off"]


class optional_build_ext(build_ext):
    """Skip the extension instead of failing the whole install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            warnings.warn(f"compiled raster kernel skipped: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"compiled raster kernel skipped: {exc}")


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "cubegt._kernels._core_cy",
        sources=["src/cubegt/_kernels/_core_cy.pyx"],
        extra_compile_args=EXT_COMPILE_ARGS,
    )
    return cythonize([ext], language_level=3)


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
