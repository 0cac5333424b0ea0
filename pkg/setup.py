from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [Extension("heatbv._kernels", ["src/heatbv/_kernels.pyx"], optional=True)],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # without Cython the package runs on the numpy fallback
    extensions = []

setup(ext_modules=extensions)
