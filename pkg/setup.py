from setuptools import setup
from setuptools.extension import Extension
import codecs
import os
import re


def local_file(filename):
    return codecs.open(
        os.path.join(os.path.dirname(__file__), filename), 'r', 'utf-8'
    )

version = re.search(
    "^__version__ = \((\d+), (\d+), (\d+)\)",
    local_file(os.path.join('lta', '__init__.py')).read(),
    re.MULTILINE
).groups()

try:
    from Cython.Build import cythonize
except ImportError:
    use_cython = False
else:
    use_cython = True

ext_modules = []

if use_cython:
    ext_modules = cythonize('lta/inference.py')
elif os.path.exists(os.path.join('lta', 'inference.c')):
    ext_modules = [
        Extension('lta.inference', ['lta/inference.c'])
    ]

setup(
    name="lta",
    version='.'.join(version),
    description='Latent class and latent tree analysis of categorical survey data',
    keywords='python latent tree models latent class analysis EM BIC '
             'classification rules',
    install_requires=[
        'numpy>=1.17',
        'pandas>=1.5',
        'scipy>=1.4',
        'networkx>=2.4',
        'pyprind>=2.11',
        'cython>=0.29',
    ],
    extras_require={
        'dev': [
            'pytest',
            'coverage',
            'cython>=0.29',
        ],
    },
    packages=['lta'],
    entry_points={
        'console_scripts': ['lta=lta.cli:main'],
    },
    long_description=local_file('README.rst').read(),
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Topic :: Scientific/Engineering :: Information Analysis',
        'Programming Language :: Python'
    ],
    ext_modules=ext_modules,
    python_requires='>=3.7'
)
