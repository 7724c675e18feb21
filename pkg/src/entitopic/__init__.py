"""Few-shot multilingual named-entity recognition with topic-aware context."""

from .config import Config, load_config
from .data import Dataset, Document, TokenSequence

__all__ = ["Config", "Dataset", "Document", "TokenSequence", "load_config"]
__version__ = "0.1.0"
