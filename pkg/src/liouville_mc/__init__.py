"""Monte-Carlo toolkit for local Liouville correlation functions with complex weights."""

__version__ = "0.1.0"
