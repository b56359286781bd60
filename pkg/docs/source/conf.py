# Sphinx configuration for the tangentcones API pages.

import os
import sys

sys.path.insert(0, os.path.abspath('../..'))

project = 'tangentcones'
author = 'tangentcones developers'
copyright = '2026, ' + author

extensions = [
    'sphinx.ext.napoleon',
    'sphinx.ext.autodoc',
    'sphinx.ext.mathjax',
    'recommonmark',
]

# Google style only.
napoleon_google_docstring = True
napoleon_numpy_docstring = False

autodoc_member_order = 'bysource'
autodoc_mock_imports = ['joblib', 'matplotlib', 'sklearn']

exclude_patterns = ['build']

html_theme = 'sphinx_rtd_theme'
