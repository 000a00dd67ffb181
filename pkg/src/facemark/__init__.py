"""facemark: heatmap-regression facial landmark detection with feature distillation.

The package is built on a small numpy autodiff engine (`facemark.autodiff`)
and layers the rest on top: Gaussian heatmap encode/decode, the distillation
losses, model specs and runtimes, evaluation metrics, a synthetic data
pipeline, and a two-phase trainer with a CLI.
"""

__version__ = "0.1.0"
