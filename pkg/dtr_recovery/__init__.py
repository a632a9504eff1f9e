"""dtr-recovery -- deep tensor representation for multi-dimensional data completion."""
__version__ = "0.1.0"
