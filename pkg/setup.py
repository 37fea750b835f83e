import os
import sys

import numpy
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


def _openmp_flags():
    if sys.platform == "win32":
        return ["/openmp"], []
    if os.environ.get("QISIM_NO_OPENMP"):
        return [], []
    return ["-fopenmp"], ["-fopenmp"]


class OptionalBuildExt(build_ext):
    """Build the kernel if possible; the numpy fallback covers a failed build."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: compiled kernel not built ({exc}); using numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            if "-fopenmp" in ext.extra_compile_args:
                print("warning: OpenMP build failed, retrying single-threaded")
                ext.extra_compile_args = [a for a in ext.extra_compile_args if a != "-fopenmp"]
                ext.extra_link_args = [a for a in ext.extra_link_args if a != "-fopenmp"]
                super().build_extension(ext)
            else:
                raise exc


def _extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    cflags, lflags = _openmp_flags()
    ext = Extension(
        "qisim._kernels._ckernel",
        ["src/qisim/_kernels/_ckernel.pyx"],
        include_dirs=[numpy.get_include()],
        # no FMA contraction: draws must match the numpy path bit for bit
        extra_compile_args=["-O3", "-ffp-contract=off"] + cflags,
        extra_link_args=lflags,
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
