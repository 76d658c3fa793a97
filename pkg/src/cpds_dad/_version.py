__version__ = "0.0.0"  # managed by `poetry-dynamic-versioning`
