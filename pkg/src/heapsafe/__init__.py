"""Static heap-safety classification with a simulated type-preserving allocator."""

__version__ = "0.1.0"
