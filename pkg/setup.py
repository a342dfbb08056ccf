import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# POURDYN_NO_EXT=1 skips the compiled core; the package then runs on its
# pure-Python kernels.
if os.environ.get("POURDYN_NO_EXT"):
    ext_modules = []
else:
    extensions = [
        Extension(
            "pourdyn._core",
            ["src/pourdyn/_core.pyx"],
            depends=["src/pourdyn/_gemm.h"],
            include_dirs=[np.get_include()],
            extra_compile_args=os.environ.get("POURDYN_CFLAGS", "-O3 -march=native").split(),
        )
    ]
    ext_modules = cythonize(extensions, compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
