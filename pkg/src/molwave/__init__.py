"""Matter-wave interferometry of large molecules: far field, Talbot-Lau, decoherence, metrology."""

__version__ = "0.1.0"
