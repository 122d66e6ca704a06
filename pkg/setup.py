import numpy
from setuptools import setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        ["src/sparsedpd/_datapath.pyx"],
        language_level=3,
        compiler_directives={"boundscheck": False, "wraparound": False},
    )
except ImportError:
    # pure-Python fallback kernel is used when the extension is unavailable
    extensions = []

setup(ext_modules=extensions, include_dirs=[numpy.get_include()])
