"""Binary text classification from sentence embeddings: an MLP head or a
histogram gradient-boosted tree ensemble, plus preprocessing, seeded
hyperparameter search and precision/recall/F1 evaluation."""

__version__ = "0.1.0"
