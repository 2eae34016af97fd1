import os

import numpy as np
from setuptools import Extension, setup

# RACHML_NO_EXT=1 skips the compiled core; the pure-Python fallback is used instead.
ext_modules = []
if not os.environ.get("RACHML_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "rachml._core",
                ["src/rachml/_core.pyx"],
                include_dirs=[np.get_include(), "src/rachml"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
