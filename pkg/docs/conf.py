# govern documentation build configuration file.
#
# Notes on style:
# 1. For rst headings, we use the following convention, based on
#    https://www.sphinx-doc.org/en/master/usage/restructuredtext/basics.html#sections:
#        = for sections
#        - for subsections
#        ^ for subsubsections

import os
import sys

sys.path.insert(0, os.path.abspath('../src'))

# -- General configuration ------------------------------------------------

needs_sphinx = '4.2'

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
    'sphinx.ext.intersphinx',
    'sphinx.ext.mathjax',
    'sphinx.ext.napoleon',
    'sphinxarg.ext',  # argparse extension
]

# Mock modules in autodoc:
autodoc_mock_imports = [
    'numpy',
    'pandas',
    'scipy',
    'toml',
]

templates_path = ['_templates']

napoleon_use_param = False

source_suffix = '.rst'
master_doc = 'index'

# General information about the project.
project = 'govern'
author = 'The govern developers'
copyright = f'2024-, {author}'

version = 'version'
release = 'version'

language = 'en'

exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']

pygments_style = 'sphinx'
todo_include_todos = False

# -- Options for HTML output ----------------------------------------------

html_theme = 'sphinx_rtd_theme'
htmlhelp_basename = 'govern_doc'

# -- Options for manual page output ---------------------------------------

man_pages = [(master_doc, 'govern', 'govern Documentation', [author], 1)]

intersphinx_mapping = {
    'python': ('https://docs.python.org/3/', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
    'pandas': ('https://pandas.pydata.org/docs/', None),
}
