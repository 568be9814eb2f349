"""Build the optional compiled rollout kernel.

If Cython or a C compiler is unavailable the package installs without it and
falls back to the pure-Python simulation loop.
"""
import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "kincbf._ckernel",
                ["src/kincbf/_ckernel.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # noqa: BLE001
    print(f"compiled kernel disabled: {exc}")
    ext_modules = []

setup(ext_modules=ext_modules)
