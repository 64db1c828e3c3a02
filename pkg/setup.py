import numpy as np
from setuptools import setup

# The compiled kernels are optional: the package falls back to the pure
# numpy implementation in lagkit.kernels._numpy when the extension is
# missing, so a failed cythonize must not break the install.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/lagkit/kernels/_fast.pyx"],
        compiler_directives={"language_level": "3"},
    )
except Exception:
    ext_modules = []

setup(
    ext_modules=ext_modules,
    include_dirs=[np.get_include()],
)
