"""Build the optional compiled kernels; the package works without them."""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SISEI_NO_EXTENSION") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [Extension("sisei._ckernels", ["src/sisei/_ckernels.pyx"],
                       extra_compile_args=["-O3"])],
            compiler_directives={"language_level": 3},
        )

setup(ext_modules=ext_modules)
