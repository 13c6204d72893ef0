"""Rate analysis and Monte Carlo validation for hybrid quantum-repeater chains."""

__version__ = "0.1.0"
