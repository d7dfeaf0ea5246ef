"""Token-embedding corpus extraction from pretrained transformers."""

from .extract import ExtractError, ExtractSpec, extract
from .format import MAGIC, write_embsq

__version__ = "0.1.0"

__all__ = ["ExtractError", "ExtractSpec", "extract", "write_embsq", "MAGIC",
           "__version__"]
