"""failpass: mine, filter, reproduce, and curate fail-pass CI build pairs."""

__version__ = "0.1.0"
