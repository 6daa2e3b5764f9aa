"""Optimal control of the 1D-1V Vlasov-Poisson system via a discrete adjoint."""

__version__ = "0.1.0"
