"""Code-description-aware ICD coding with associated and hierarchical distillation."""

__version__ = "0.1.0"
