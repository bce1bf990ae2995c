"""Build the optional Cython kernels; the package falls back to pure Python."""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("DNLS_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "dnls._ckernels",
                    ["src/dnls/_ckernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    optional=True,
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
