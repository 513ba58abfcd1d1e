"""blinklab: blink detection and attention estimation pipeline.

EEG-assisted blink labeling, landmark-based eye cropping, a small CNN
open/closed-eye classifier with equal-error-rate threshold calibration,
per-eye benchmark evaluation, and sliding-window attention vs blink-rate
correlation analysis, plus synthetic-data generators and oracles that make
the whole pipeline verifiable at desk scale.
"""

__version__ = "0.1.0"

from .errors import BlinkLabError

__all__ = ["BlinkLabError", "__version__"]
