"""Visuomotor subroutines for navigation, learned from action-free expert
trajectories by pseudo-labeling them with a self-supervised inverse model."""

__version__ = "0.1.0"
