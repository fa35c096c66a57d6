"""Stick-slip severity prediction from surface drilling channels.

The package provides a small reverse-mode autodiff core (``stickslip.nn``),
a two degree-of-freedom drill-string simulator (``stickslip.simulate``),
dataset windowing and normalization (``stickslip.windowing``), three
training objectives for domain generalization (``stickslip.objectives``),
a training and model-selection harness (``stickslip.training``), transfer
fine-tuning (``stickslip.transfer``), evaluation metrics
(``stickslip.metrics``), scikit-learn style estimators
(``stickslip.estimators``), and a command line interface (``stickslip.cli``).
"""

__version__ = "0.1.0"

from . import exceptions

__all__ = ["exceptions", "__version__"]
