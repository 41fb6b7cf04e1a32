"""tfdiff - Time-frequency diffusion for complex-valued RF sequences."""

__version__ = "0.1.0"
