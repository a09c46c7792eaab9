# -*- coding: utf-8 -*-
#
# MAGCAL documentation build configuration file.
#
# Note that we're in magcal's docs/source

import sys
import os
import sphinx_rtd_theme

# magcal itself is imported by autodoc from the repository root
sys.path.insert(0, os.path.abspath("."))
sys.path.insert(0, os.path.abspath(os.path.join("..", "..")))

# -- General configuration ------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.mathjax",
    "sphinx.ext.viewcode",
    "sphinx.ext.napoleon",
]

templates_path = ["_templates"]
source_suffix = ".rst"
master_doc = "index"

project = "MAGCAL"
copyright = "magcal developers"
author = "magcal developers"

version = "0.1"
release = "0.1.0"

language = None
exclude_patterns = []
pygments_style = "sphinx"
todo_include_todos = False

# -- Options for HTML output ----------------------------------------------

html_theme = "sphinx_rtd_theme"
html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]
html_static_path = []
htmlhelp_basename = "MAGCALdoc"

# -- Options for LaTeX and manual page output -----------------------------

latex_documents = [
    (master_doc, "MAGCAL.tex", "MAGCAL Documentation", author, "manual"),
]

man_pages = [(master_doc, "magcal", "MAGCAL Documentation", [author], 1)]
