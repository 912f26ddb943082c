"""Builds the optional compiled kernel extension.

The package works without it: attnalign.kernels falls back to the numpy
implementation when the extension is missing or fails to build.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """build_ext that downgrades compiler failures to a warning."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any toolchain failure
            print(f"warning: compiled kernels not built ({exc}); "
                  "using the numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: building {ext.name} failed ({exc}); "
                  "using the numpy fallback")


ext_modules = []
cmdclass = {}
if os.environ.get("ATTNALIGN_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension(
                "attnalign.kernels._compiled",
                sources=["src/attnalign/kernels/_compiled.pyx"],
                extra_compile_args=["-O3"],
            )],
            language_level=3,
        )
        cmdclass["build_ext"] = OptionalBuildExt
    except ImportError:
        print("warning: Cython not available; using the numpy fallback")

setup(ext_modules=ext_modules, cmdclass=cmdclass)
