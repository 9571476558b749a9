"""Rate-equation model, oracles, spectra and fits for resolved-sideband cavity cooling of a trapped ion."""

__version__ = "0.1.0"
