import os

from setuptools import Extension, setup

# The token-walk kernel is an optional speedup; the package falls back to the
# numpy implementation when the extension is absent (SCHEMAFORCE_PURE=1 skips
# the build entirely).
ext_modules = []
if os.environ.get("SCHEMAFORCE_PURE") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("schemaforce._tokenwalk", ["src/schemaforce/_tokenwalk.pyx"])],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
