"""Temperature as a quantum observable: spectra, thermal EPR statistics and a position thermometer."""

__version__ = "0.1.0"
