"""Spline-based 2D magnetostatic simulation and design optimization of
permanent-magnet synchronous motors.

Subsystems: spline primitives (:mod:`splinemotor.splines`), material models
(:mod:`splinemotor.materials`), parametric multipatch geometry
(:mod:`splinemotor.geometry`), discrete spaces and system assembly
(:mod:`splinemotor.discretization`, :mod:`splinemotor.assembly`), nonlinear
field solver and torque evaluation (:mod:`splinemotor.solver`), scaling laws
and cost models (:mod:`splinemotor.costs`), the design-to-objective
evaluation pipeline (:mod:`splinemotor.pipeline`), adjoint sensitivities
(:mod:`splinemotor.sensitivity`), constrained design optimization
(:mod:`splinemotor.optimizer`), and a command line front end
(:mod:`splinemotor.cli`).
"""

__version__ = "0.1.0"
