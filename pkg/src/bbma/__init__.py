"""Symbol-class broadcast power allocation (BBMA) downlink simulator."""

__version__ = "0.1.0"
