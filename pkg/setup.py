import os

from setuptools import setup

ext_modules = []
if not os.environ.get("NOMA_WF_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass  # pure-Python kernels are used at runtime
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "noma_waterfill.kernels._ckernels",
                    ["src/noma_waterfill/kernels/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
