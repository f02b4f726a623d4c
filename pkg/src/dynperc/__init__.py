"""dynperc: simulation lab for random walk on dynamical percolation on the torus."""

__version__ = "0.1.0"
