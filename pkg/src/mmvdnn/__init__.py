"""Jointly sparse (MMV) recovery with classical greedy/convex solvers and
network-guided pursuit, applied to angular-domain channel estimation."""

__version__ = "0.1.0"
