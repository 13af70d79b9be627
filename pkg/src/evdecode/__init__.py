"""Event-based neural decoding: synthetic sensing, event filtering, decoders, and resource accounting."""

__version__ = "0.1.0"
