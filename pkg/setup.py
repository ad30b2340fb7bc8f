import os

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
    import scipy  # noqa: F401 - the extension cimports scipy.linalg.cython_blas
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("CONTREL_SKIP_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "contrel._kernels_cy",
                ["src/contrel/_kernels_cy.pyx"],
                extra_compile_args=["-O3", "-march=native"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
