"""Moment tensors, identifiability probes and posterior contraction for LDA and mixtures of products."""

from .models import Corpus, LdaParams, MixingMeasure

__all__ = ["Corpus", "LdaParams", "MixingMeasure"]
__version__ = "0.1.0"
