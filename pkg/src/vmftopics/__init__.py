"""Spherical-latent neural topic modeling with keyword-group matching.

A bag-of-words variational topic model whose latent lives on the unit
hypersphere (von Mises-Fisher posterior, temperature-scaled softmax,
learnable concentration), decoded against fixed spherical word embeddings.
Keyword groups supplied by a user are matched to topics with entropic
optimal transport in a short second training stage, which makes the model
cheap to re-steer interactively.
"""

__version__ = "0.1.0"
