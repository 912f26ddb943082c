"""Attention-vs-alignment diagnostics for LSTM encoder-decoder models.

Subpackages:
  kernels     numerical hot loops (compiled extension or numpy fallback)
  tensor      reverse-mode autodiff substrate
  data        corpora, vocabularies, alignments, annotations, batching
  model       the encoder-decoder with both attention variants
  alignment   hard/soft alignment algebra, AER, symmetrization
  metrics     per-token measures, correlations, aggregated reports
  heatmap     SVG attention grids
  cli         command-line pipeline
"""

__version__ = "0.1.0"
