"""Build script: compiles the accelerated core if a toolchain is available.

The package works without the extension (pure numpy fallback); a failed
compile downgrades to a warning instead of aborting the install.
"""

import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # toolchain missing entirely
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            "WARNING: compiled core not built (%s); "
            "falling back to the pure numpy backend" % exc,
            file=sys.stderr,
        )


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        print("WARNING: %s; skipping compiled core" % exc, file=sys.stderr)
        return []

    # -ffp-contract=off: no fused multiply-add, keeps the bridge recursion
    #   bitwise identical to the numpy backend
    # -fno-math-errno: sqrt/exp don't set errno, so the compiler can
    #   vectorise them (results unchanged)
    compile_args = ["-O3", "-ffp-contract=off", "-fno-math-errno"]
    link_args = []
    if os.environ.get("WLMC_NO_OPENMP") != "1":
        compile_args.append("-fopenmp")
        link_args.append("-fopenmp")

    ext = Extension(
        "wlmc._core",
        sources=["src/wlmc/_core.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=compile_args,
        extra_link_args=link_args,
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level="3")


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
