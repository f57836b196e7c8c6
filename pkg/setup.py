import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "kgan._kernels._lstm_ext",
                ["src/kgan/_kernels/_lstm_ext.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,  # pure-numpy fallback is selected at import when the ext is missing
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
