"""Two-stage ranking: a pointwise initial ranker co-trained with a setwise re-ranker."""
__version__ = "0.1.0"
