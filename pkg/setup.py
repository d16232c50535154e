"""Build the optional compiled simulation kernel.

The package works without it: ``zshift.simkit.kernel`` falls back to the
pure-Python implementation when the extension is missing.
"""
import os

from setuptools import setup
from setuptools.command.build_ext import build_ext

ext_modules = []
if os.environ.get("ZSHIFT_NO_EXT", "") in ("", "0"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [Extension("zshift.simkit._kernel_c", ["src/zshift/simkit/_kernel_c.pyx"],
                       extra_compile_args=["-O3"])],
            language_level=3,
        )


class OptionalBuildExt(build_ext):
    """Skip the extension instead of failing the install when compilation breaks."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: compiled kernel not built ({exc}); using pure-Python fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: building {ext.name} failed ({exc}); using pure-Python fallback")


setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
