"""Interactive imitation-learning workbench on a cave-finding gridworld."""

__version__ = "0.1.0"
