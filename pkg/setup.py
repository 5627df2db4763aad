import os

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-python install; flora falls back to numpy kernels
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("FLORA_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "flora._kernels",
                ["src/flora/_kernels.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off", "-fno-fast-math"],
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
