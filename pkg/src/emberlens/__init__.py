"""Explainable PE-malware scoring pipeline.

Parses EMBER-style JSONL feature records, vectorizes them into the fixed
2,381-dimensional layout, scores them with a LightGBM-format tree ensemble,
attributes the score to features with exact TreeSHAP, folds the attributions
into nine named feature groups, and renders prompt / reference-explanation
pairs that downstream language models are evaluated against with BLEU, ROUGE
and embedding-cosine metrics.  A low-rank-adapter planner reproduces the
parameter and checkpoint-size accounting for the companion fine-tuning setup.
"""

__version__ = "0.1.0"
