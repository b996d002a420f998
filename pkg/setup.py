from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "oodgan._simkernel",
                ["src/oodgan/_simkernel.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
    )
else:
    # no Cython: the package runs on the pure-Python kernel
    ext_modules = []

setup(ext_modules=ext_modules)
