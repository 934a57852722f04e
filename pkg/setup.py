"""Build script for the optional compiled kernel.

Without Cython or a C compiler the package still installs; the pure-Python
fallback is used at runtime.
"""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "aurlab._kernels",
                ["src/aurlab/_kernels.pyx"],
                # no fused multiply-add: keeps results bit-identical to the Python fallback
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
