"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time); the extension only speeds up the loop-heavy
kernels. If Cython or a C compiler is unavailable the build degrades to a
pure-Python install.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from setuptools import Extension
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "sspe._kernels._native",
                ["src/sspe/_kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                # no -ffast-math: kernel results must match the numpy
                # fallback bit-for-bit where the op order is identical
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
