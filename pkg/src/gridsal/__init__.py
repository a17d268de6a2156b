"""Grid and context saliency for dense-prediction networks, with a synthetic
context-bias benchmark (toy segmentation task, texture-biased datasets)."""

__version__ = "0.1.0"
