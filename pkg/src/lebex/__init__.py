"""Lebesgue extensions of monotone convex functionals."""
