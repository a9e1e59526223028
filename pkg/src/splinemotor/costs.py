"""Material cost, Joule loss and the radial/axial scaling laws.

The cross section is always meshed at reference size.  The radial scale
``kR`` and the stack length ``L`` enter every reported quantity through
closed-form power laws, so one nonlinear field solve serves the whole
(kR, L) family.  The assembled current density carries a factor kR to
keep the physical density at J0 after scaling.

Cost is a dimensionless index: density times area times unit cost weight,
summed over the costed materials of one sector (one pole).  Joule loss is
reported per slot and for the full machine.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import MachinePatchwork
from .materials import Material, default_materials

#: Copper conductivity [S/m].
COPPER_CONDUCTIVITY = 5.77e7

#: Default slot fill factor entering the loss constant C = J0^2/(sigma*fill).
DEFAULT_FILL_FACTOR = 0.6

#: Power-law exponents (power of kR, power of L) per quantity kind.
SCALING_EXPONENTS: dict[str, tuple[int, int]] = {
    "B": (0, 0),
    "H": (0, 0),
    "area": (2, 0),
    "current": (1, 0),
    "current_density": (-1, 0),
    "torque": (2, 1),
    "cost": (2, 1),
}


def scale_quantity(value: float, kind: str, kR: float = 1.0,
                   L_ratio: float = 1.0) -> float:
    """Scale a reference-size quantity to radial scale kR and length
    ratio L_ratio using the tabulated power law."""
    try:
        a, b = SCALING_EXPONENTS[kind]
    except KeyError:
        raise ValueError(
            f"unknown quantity kind {kind!r}; expected one of "
            f"{sorted(SCALING_EXPONENTS)}") from None
    return value * kR ** a * L_ratio ** b


def material_cost(areas: dict[str, float], L: float, kR: float,
                  materials: dict[str, Material] | None = None,
                  ) -> tuple[float, dict[str, float]]:
    """Cost index M = L kR^2 sum_i rho_i A_i c_i and its area derivatives.

    `areas` maps material kind to cross-section area [m^2] at reference
    size.  Materials without density or cost weight (air) contribute
    nothing.  Returns (M, dM/dA per kind).
    """
    materials = default_materials() if materials is None else materials
    total = 0.0
    sens: dict[str, float] = {}
    for kind, area in areas.items():
        mat = materials[kind]
        weight = L * kR ** 2 * mat.density * mat.cost_factor
        sens[kind] = weight
        total += weight * area
    return total, sens


def joule_loss(A_slot: float, L: float, kR: float = 1.0,
               J0: float = 3.2e6,
               conductivity: float = COPPER_CONDUCTIVITY,
               fill: float = DEFAULT_FILL_FACTOR,
               n_slots: int = 36) -> tuple[float, float]:
    """Joule loss P = C A_slot L [W] per slot and machine total.

    C = J0^2 / (conductivity * fill); `A_slot` is the slot copper area at
    reference size and scales with kR^2.  The physical current density is
    held at J0 across scales, so the loss density C is scale-invariant.
    """
    if fill <= 0 or conductivity <= 0:
        raise ValueError("fill factor and conductivity must be positive")
    C = J0 ** 2 / (conductivity * fill)
    per_slot = C * A_slot * kR ** 2 * L
    return per_slot, per_slot * n_slots


@dataclass(frozen=True)
class CostModel:
    """Cost and loss summary of one built cross section.

    Areas are per sector (one pole) at reference size; `M` follows the
    sector convention while `P_J` counts every slot of the machine.
    """

    areas: dict[str, float]
    A_slot: float
    n_slots: int
    L: float
    kR: float
    J0: float = 3.2e6
    conductivity: float = COPPER_CONDUCTIVITY
    fill: float = DEFAULT_FILL_FACTOR
    materials: dict[str, Material] = field(default_factory=default_materials)

    @classmethod
    def from_patchwork(cls, pw: MachinePatchwork,
                       L: float | None = None, kR: float | None = None,
                       materials: dict[str, Material] | None = None,
                       J0: float = 3.2e6,
                       conductivity: float = COPPER_CONDUCTIVITY,
                       fill: float = DEFAULT_FILL_FACTOR) -> "CostModel":
        slot_areas = pw.slot_areas()
        if not slot_areas:
            raise ValueError("patchwork has no slot copper patches")
        c = pw.constants
        return cls(
            areas=pw.area_by_material(),
            A_slot=float(np.mean(list(slot_areas.values()))),
            n_slots=c.slots_per_sector * 2 * c.pole_pairs,
            L=pw.design.L if L is None else L,
            kR=pw.design.kR if kR is None else kR,
            J0=J0, conductivity=conductivity, fill=fill,
            materials=materials if materials is not None else default_materials(),
        )

    def breakdown(self) -> dict[str, float]:
        """Cost contribution per material kind."""
        _, sens = material_cost(self.areas, self.L, self.kR, self.materials)
        return {k: sens[k] * a for k, a in self.areas.items() if sens[k] != 0.0}

    @property
    def M(self) -> float:
        total, _ = material_cost(self.areas, self.L, self.kR, self.materials)
        return total

    @property
    def C(self) -> float:
        return self.J0 ** 2 / (self.conductivity * self.fill)

    @property
    def P_J_slot(self) -> float:
        per_slot, _ = joule_loss(self.A_slot, self.L, self.kR, self.J0,
                                 self.conductivity, self.fill, self.n_slots)
        return per_slot

    @property
    def P_J(self) -> float:
        """Machine-total Joule loss [W]."""
        _, total = joule_loss(self.A_slot, self.L, self.kR, self.J0,
                              self.conductivity, self.fill, self.n_slots)
        return total

    # closed-form scale derivatives; exact by construction
    @property
    def dM_dL(self) -> float:
        return self.M / self.L

    @property
    def dM_dkR(self) -> float:
        return 2.0 * self.M / self.kR

    @property
    def dPJ_dL(self) -> float:
        return self.P_J / self.L

    @property
    def dPJ_dkR(self) -> float:
        return 2.0 * self.P_J / self.kR
