"""Stationary bipartite matching: LP relaxations, correlated proposals, balanced greedy, simulation."""

__version__ = "0.1.0"
