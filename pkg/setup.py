#!/usr/bin/env python
from setuptools import setup, find_namespace_packages
from version import get_git_version

setup(
    name='KIPAC_quantRelax',
    version=get_git_version(),
    author='',
    author_email='',
    description='A Python package for training models with quantized weights by relaxed projection',
    license='gpl2',
    packages=find_namespace_packages(include=['KIPAC.*']),
    include_package_data=True,
    classifiers=[
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: GPL2 License',
        'Operating System :: OS Independent',
        'Programming Language :: Python',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
    scripts=[],
    entry_points={'console_scripts': [
            'quantRelax = KIPAC.quantRelax.cli:main',
            ]},
    install_requires=[
        'numpy >= 1.17',
        'astropy >= 3.2.2',
        'scipy >= 1.3.1',
        'pytest >= 5.2.1',
        'hypothesis >= 4.0',
    ],
    extras_require=dict(
        all=[],
    ),
)
