"""Soft-rigid contact simulator: barrier-based implicit time stepping for
tetrahedral FEM solids, Baraff-Witkin shells, and 12-DoF affine rigid bodies,
with a parallel-jaw grasping pipeline and a cube-picking RL environment."""

__version__ = "0.1.0"
