import os

import numpy as np
from setuptools import Extension, setup

extensions = []
if os.environ.get("QAFLORA_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # fall back to the numpy kernels
        pass
    else:
        extensions = cythonize(
            [
                Extension(
                    "qaflora.kernels._ckernels",
                    ["src/qaflora/kernels/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=extensions)
