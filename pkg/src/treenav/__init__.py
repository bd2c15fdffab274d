"""Dialog-tree navigation: simulator, policies, training, evaluation, serving."""

__version__ = "0.1.0"
