#!/usr/bin/env python
# -*- coding: utf-8 -*-

# flake8: noqa

import io
import os
import re
from glob import glob

from setuptools import find_packages, setup


def _load_requirements(path_dir, file_name='requirements.txt', comment_char='#'):
    with open(os.path.join(path_dir, file_name), 'r') as file:
        lines = [line.strip() for line in file.readlines()]

    requirements = []
    for line in lines:
        if comment_char in line:
            line = line[:line.index(comment_char)].strip()
        if line.startswith('http'):
            continue
        if line:
            requirements.append(line)

    return requirements


def _find_optional_installs(requirements_dir):
    """Extras named after requirements/requirements-<extra>.txt files."""
    optional_dict = {}
    for requirements_filepath in glob(os.path.join(requirements_dir, 'requirements-*.txt')):
        filename = os.path.basename(requirements_filepath)
        optional_name = re.search(r"requirements-(\S*?)\.txt", filename).group(1)
        optional_dict[optional_name] = _load_requirements(requirements_dir, filename)

    return optional_dict


root_path = os.path.abspath(os.path.dirname(__file__))
requirements_dir = os.path.join(root_path, 'requirements')

NAME = 'tangentcones'
DESCRIPTION = 'Numerical experiments on tangent cones of warped-product Ricci limit spaces.'
REQUIRES_PYTHON = '>=3.8.0'
VERSION = '0.0.1'

try:
    with io.open(os.path.join(root_path, 'README.md'), encoding='utf-8') as f:
        long_description = '\n' + f.read()
except FileNotFoundError:
    long_description = DESCRIPTION


setup(
    name=NAME,
    version=VERSION,
    description=DESCRIPTION,
    long_description=long_description,
    long_description_content_type='text/markdown',
    python_requires=REQUIRES_PYTHON,
    packages=find_packages(
        exclude=["tests", "*.tests", "*.tests.*", "tests.*"]
    ),
    entry_points={
        'console_scripts': ['lab=tangentcones.cli:main'],
    },
    install_requires=_load_requirements(requirements_dir, "requirements.txt"),
    extras_require=_find_optional_installs(requirements_dir),
    include_package_data=True,
    classifiers=[
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Topic :: Scientific/Engineering :: Mathematics',
    ],
)
