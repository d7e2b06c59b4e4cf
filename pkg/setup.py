"""Build the optional Cython kernels; the package falls back to numpy if they are absent."""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure install, no compiled core
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "longmem_lab._kernels",
                ["src/longmem_lab/_kernels.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
