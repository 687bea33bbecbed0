"""Min-max window bounds for the autoconvolution constant on step functions."""

__version__ = "0.1.0"
