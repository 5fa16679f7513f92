# -*- coding: utf-8 -*-
#
# lta documentation build configuration file
#
import sys
import os

sys.path.insert(0, os.path.abspath('../..'))

import lta

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.viewcode',
              'sphinx.ext.intersphinx']

intersphinx_mapping = {
    'pandas': ('https://pandas.pydata.org/docs', None),
    'numpy': ('https://numpy.org/doc/stable', None),
}

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

# General information about the project.
project = 'lta'
copyright = 'MIT licensed. If you find a bug, please submit an issue.'

# The short X.Y version.
version = '.'.join([str(x) for x in lta.__version__])
# The full version, including alpha/beta/rc tags.
release = version

exclude_patterns = []
pygments_style = 'sphinx'

html_theme = 'alabaster'
html_static_path = []
htmlhelp_basename = 'ltadoc'

latex_elements = {
}
latex_documents = [
  ('index', 'lta.tex', 'lta Documentation', 'lta developers', 'manual'),
]
man_pages = [
    ('index', 'lta', 'lta Documentation', ['lta developers'], 1)
]
texinfo_documents = [
  ('index', 'lta', 'lta Documentation', 'lta developers', 'lta',
   'Latent tree analysis of categorical survey data.', 'Miscellaneous'),
]
