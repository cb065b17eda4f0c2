"""Imbalance-aware text classification pipeline.

Three stages: class-inverse generative augmentation through pluggable
text-generation providers, embedding-based feature extraction, and robust
training of a small classifier with stochastically gated adversarial
perturbations and focal loss, plus full imbalance-aware evaluation.
"""

__version__ = "0.1.0"
