"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (pure numpy fallback); any build
failure here downgrades to a warning so `pip install` never hard-fails on
a missing compiler.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "depthsweep._kernels._ck",
                sources=["src/depthsweep/_kernels/_ck.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - depends on build env
    sys.stderr.write(
        "depthsweep: Cython extension not built (%s); "
        "falling back to pure numpy kernels\n" % exc
    )

setup(ext_modules=ext_modules)
