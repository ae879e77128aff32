"""Implicit emotion classification for tweets: an embedding + bidirectional
GRU + capsule-routing model with a softmax head, trained with Adam, plus the
tweet preprocessing pipeline and evaluation metrics that go with it."""

__version__ = "0.1.0"

from .errors import EmocapsError

__all__ = ["EmocapsError", "__version__"]
