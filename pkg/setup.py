import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "semslam._kernels",
    ["src/semslam/_kernels.pyx"],
    include_dirs=[np.get_include()],
    # no FMA contraction: the compiled and numpy kernels must round identically
    extra_compile_args=["-O3", "-ffp-contract=off"],
)

setup(ext_modules=cythonize([ext], language_level=3))
