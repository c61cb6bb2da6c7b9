"""Build the optional compiled tape kernel.

The package works without it (numpy fallback); set BACHLAB_NO_EXT=1 to skip.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("BACHLAB_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [Extension("bachlab._tape_c", ["src/bachlab/_tape_c.pyx"],
                       extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
