import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# optional=True: a failed compile leaves the numpy fallback in charge
ext = Extension(
    "fedsim._auc_ext",
    ["src/fedsim/_auc_ext.pyx"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    optional=True,
)

setup(
    ext_modules=cythonize([ext], language_level=3),
)
