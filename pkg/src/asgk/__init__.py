"""Tag-graph guided report generation: autodiff core, vision branch, graph encoder, decoder,
synthetic data, metrics and the training pipeline."""

__version__ = "0.1.0"
