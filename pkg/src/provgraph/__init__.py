"""Image provenance graph construction from pixel matches and metadata votes."""

__version__ = "0.1.0"
