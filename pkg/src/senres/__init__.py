"""Resampling augmentation and contrastive pretraining for sensor-based activity recognition."""

__version__ = "0.1.0"
