import sys

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    print("Cython/numpy not found, building without compiled kernels", file=sys.stderr)
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "pvem._kernels",
                ["src/pvem/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
