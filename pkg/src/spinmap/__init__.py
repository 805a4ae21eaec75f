"""Nuclear-spin cluster localization from weak-measurement FID spectra."""

__version__ = "0.1.0"
