# Builds the optional compiled kernels; the package falls back to numpy
# implementations when the extension is absent.
import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "imbalbench._ckernels",
                ["src/imbalbench/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                # keep float results reproducible: no FMA contraction
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
