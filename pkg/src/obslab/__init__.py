"""obslab: spectral experiments for dispersive propagation, observability
inequalities and impulse control."""

__version__ = "0.1.0"
