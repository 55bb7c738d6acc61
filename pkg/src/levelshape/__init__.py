"""Fixed-domain penalization toolkit for shape optimization with a non-smooth state equation."""
