"""Design-to-objective evaluation pipeline.

Chains geometry build, discretization, assembly, the Newton solves on the
operating grid and the cost model into one reusable model object.  The
converged states are kept on the result so a gradient pass can reuse them
without re-solving.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import (DEFAULT_HARMONICS, RATED_CURRENT_DENSITY, Assembly,
                       OperatingPoint)
from .costs import COPPER_CONDUCTIVITY, DEFAULT_FILL_FACTOR, CostModel
from .discretization import Discretization
from .geometry import DesignVector, MachineConstants, build_geometry
from .geometry.patchwork import MachinePatchwork
from .materials import Material, default_materials
from .solver import (DEFAULT_BETA_GRID, NewtonSolver, SolutionState,
                     SolverError, torque)

WATTS_PER_KILOWATT = 1000.0

#: Current levels entering the ripple sum: cogging, half and full load.
DEFAULT_CURRENT_LEVELS = (0.0, 0.5, 1.0)


@dataclass(frozen=True)
class OperatingGrid:
    """Cartesian grid of rotor angles and current scale levels."""

    betas: tuple[float, ...] = DEFAULT_BETA_GRID
    current_levels: tuple[float, ...] = DEFAULT_CURRENT_LEVELS

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        object.__setattr__(
            self, "current_levels",
            tuple(float(s) for s in self.current_levels))
        if not self.betas or not self.current_levels:
            raise ValueError("operating grid must not be empty")
        if any(s < 0 for s in self.current_levels):
            raise ValueError("current levels must be non-negative")

    @property
    def n_points(self) -> int:
        return len(self.betas) * len(self.current_levels)

    @property
    def full_load_index(self) -> int:
        """Index of the unit current level (the torque-constraint level)."""
        for i, s in enumerate(self.current_levels):
            if s == 1.0:
                return i
        raise ValueError("operating grid has no unit current level")


@dataclass(frozen=True)
class ObjectiveWeights:
    """Weights of the scalarized objective and the torque constraint."""

    mass: float = 0.05
    ripple: float = 10.0
    loss: float = 4.0
    target_torque: float = 1.5


@dataclass
class BuiltDesign:
    """Geometry, discretization, assembly and cost model of one design."""

    design: DesignVector
    patchwork: MachinePatchwork
    disc: Discretization
    assembly: Assembly
    cost_model: CostModel


@dataclass
class Evaluation:
    """Objective components of one design over the operating grid.

    torques[l, b] is the full-machine torque at current level l and
    rotor angle b; states keeps the converged fields in the same layout
    for reuse by the adjoint gradient.
    """

    design: DesignVector
    grid: OperatingGrid
    weights: ObjectiveWeights
    torques: np.ndarray
    ripples: np.ndarray
    mean_torque: float
    mass_cost: float
    loss_kw: float
    breakdown: dict[str, float] = field(default_factory=dict)
    states: list[list[SolutionState]] = field(default_factory=list)
    built: BuiltDesign | None = None

    @property
    def ripple_sum(self) -> float:
        return float(np.sum(self.ripples))

    @property
    def f_opt(self) -> float:
        w = self.weights
        return (w.mass * self.mass_cost + w.ripple * self.ripple_sum
                + w.loss * self.loss_kw)

    @property
    def torque_margin(self) -> float:
        """Mean full-load torque minus the target; feasible when >= 0."""
        return self.mean_torque - self.weights.target_torque

    def components(self) -> dict[str, float]:
        return {
            "f_opt": self.f_opt,
            "mass_cost": self.mass_cost,
            "ripple_sum": self.ripple_sum,
            "loss_kw": self.loss_kw,
            "mean_torque": self.mean_torque,
        }


class MachineModel:
    """Evaluates a design: fields on the operating grid plus cost terms.

    Every operating point is solved at reference excitation; the stack
    length L and the radial scale kR enter the reported torque, material
    cost and Joule loss through their closed-form power laws (all three
    scale with L kR^2).  That keeps the L and kR objective derivatives
    exact instead of PDE-mediated.
    """

    def __init__(self, constants: MachineConstants | None = None,
                 materials: dict[str, Material] | None = None,
                 refine: int = 2, degree: int = 2, n_gauss: int = 3,
                 mortar_gauss: int = 10, n_harmonics: int = DEFAULT_HARMONICS,
                 grid: OperatingGrid | None = None,
                 weights: ObjectiveWeights | None = None,
                 current_density: float = RATED_CURRENT_DENSITY,
                 fill: float = DEFAULT_FILL_FACTOR,
                 conductivity: float = COPPER_CONDUCTIVITY,
                 solver_options: dict | None = None,
                 n_threads: int = 1):
        self.constants = constants if constants is not None else MachineConstants()
        self.materials = materials if materials is not None else default_materials()
        self.refine = refine
        self.degree = degree
        self.n_gauss = n_gauss
        self.mortar_gauss = mortar_gauss
        self.n_harmonics = n_harmonics
        self.grid = grid if grid is not None else OperatingGrid()
        self.weights = weights if weights is not None else ObjectiveWeights()
        self.current_density = current_density
        self.fill = fill
        self.conductivity = conductivity
        self.solver_options = dict(solver_options or {})
        self.n_threads = max(1, int(n_threads))

    def build(self, design: DesignVector) -> BuiltDesign:
        pw = build_geometry(design, self.constants)
        disc = Discretization(pw, refine=self.refine, degree=self.degree,
                              n_gauss=self.n_gauss,
                              mortar_gauss=self.mortar_gauss)
        assembly = Assembly(disc, materials=self.materials,
                            n_harmonics=self.n_harmonics,
                            current_density=self.current_density)
        cost_model = CostModel.from_patchwork(
            pw, materials=self.materials, J0=self.current_density,
            conductivity=self.conductivity, fill=self.fill)
        return BuiltDesign(design, pw, disc, assembly, cost_model)

    def solver(self, built: BuiltDesign) -> NewtonSolver:
        return NewtonSolver(built.assembly, **self.solver_options)

    def _solve_level(self, built: BuiltDesign, scale: float,
                     phi0: float) -> tuple[list[SolutionState], np.ndarray]:
        """Warm-started solve chain over the angle grid at one level."""
        solver = self.solver(built)
        states: list[SolutionState] = []
        torques = np.empty(len(self.grid.betas))
        state = None
        for j, beta in enumerate(self.grid.betas):
            op = OperatingPoint(current_scale=scale, beta=beta, phi0=phi0)
            try:
                state = solver.solve(op, init=state)
            except SolverError as exc:
                raise SolverError(
                    f"solve failed at current scale {scale:g}, "
                    f"beta={np.rad2deg(beta):.3f} deg: {exc}",
                    exc.residual_history) from exc
            states.append(state)
            torques[j] = torque(built.assembly, state)
        return states, torques

    def solve_grid(self, built: BuiltDesign
                   ) -> tuple[list[list[SolutionState]], np.ndarray]:
        """Solve all grid points; rows ordered like grid.current_levels."""
        phi0 = built.design.phi0
        levels = self.grid.current_levels
        if self.n_threads > 1 and len(levels) > 1:
            with ThreadPoolExecutor(max_workers=self.n_threads) as pool:
                results = list(pool.map(
                    lambda s: self._solve_level(built, s, phi0), levels))
        else:
            results = [self._solve_level(built, s, phi0) for s in levels]
        states = [r[0] for r in results]
        torques = np.stack([r[1] for r in results])
        return states, torques

    def evaluate(self, design: DesignVector | BuiltDesign) -> Evaluation:
        built = design if isinstance(design, BuiltDesign) else self.build(design)
        states, torques = self.solve_grid(built)
        ripples = np.std(torques, axis=1)
        mean_torque = float(np.mean(torques[self.grid.full_load_index]))
        cm = built.cost_model
        return Evaluation(
            design=built.design, grid=self.grid, weights=self.weights,
            torques=torques, ripples=ripples, mean_torque=mean_torque,
            mass_cost=cm.M, loss_kw=cm.P_J / WATTS_PER_KILOWATT,
            breakdown=cm.breakdown(), states=states, built=built)
