import os

from setuptools import setup

# The compiled kernels are optional: the package falls back to the pure
# numpy implementations when the extension is missing or when
# CHROMAFLOW_PURE=1 is set at build time.
ext_modules = []
if os.environ.get("CHROMAFLOW_PURE") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "chromaflow._kernels._native",
                    ["src/chromaflow/_kernels/_native.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": 3},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
