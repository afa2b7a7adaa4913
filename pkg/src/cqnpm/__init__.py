"""Complex quasi-Newton proximal reconstruction for multi-coil MRI."""
__version__ = "0.1.0"
