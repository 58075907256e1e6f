"""Physical-layer deception metrics and the MM-BCD-FP allocation solver."""
__version__ = "0.1.0"
