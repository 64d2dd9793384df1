"""GAN-based anomaly detection for generator fuel-consumption logs."""

__version__ = "0.1.0"
