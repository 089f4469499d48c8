"""seqmia - membership inference auditing for autoregressive sequence models."""

__version__ = "0.1.0"
