"""Builds the optional compiled kernels; the package works without them."""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("INTENTCACHE_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [Extension("intentcache.executor._kernels", ["src/intentcache/executor/_kernels.pyx"])],
            language_level=3,
            quiet=True,
        )

setup(ext_modules=ext_modules)
