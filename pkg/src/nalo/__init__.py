"""Exact concentration probabilities of random walks on groups, and the
nilprogression toolkit behind the inverse Littlewood-Offord problem."""

__version__ = "0.1.0"
