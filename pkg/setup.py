"""Builds the optional compiled wave kernel; the package works without it."""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # no compiler or Cython: numpy fallback
            print(f"warning: compiled kernel not built ({exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: {ext.name} not built ({exc})")


def extensions():
    if os.environ.get("DELAYWAVE_NO_EXT"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension
    ext = Extension("delaywave._core._wave", ["src/delaywave/_core/_wave.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"])
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
