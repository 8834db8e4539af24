"""Metal-aware active MRI acquisition: simulation, sampling policies, MAR and training."""

__version__ = "0.1.0"
