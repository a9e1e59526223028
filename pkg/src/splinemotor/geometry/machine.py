"""Fixed machine constants.

These are the quantities that are *not* design variables: topology (pole
pairs, slot count), the absolute radii that anchor the parametric geometry,
and the guard margins used by the feasibility constraints.  Defaults
describe a mid-size interior-magnet machine consistent with the documented
design-variable bounds; override any of them through the run configuration.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# slot phase pattern tokens: phase letter A/B/C plus winding sense
_PHASE_INDEX = {"A": 0, "B": 1, "C": 2}


def parse_phase_token(token: str) -> tuple[int, float]:
    """``'A+'`` -> ``(0, +1.0)``; ``'C-'`` -> ``(2, -1.0)``."""
    token = token.strip().upper()
    if len(token) != 2 or token[0] not in _PHASE_INDEX or token[1] not in "+-":
        raise ValueError(f"bad phase token {token!r}, expected like 'A+' or 'C-'")
    return _PHASE_INDEX[token[0]], 1.0 if token[1] == "+" else -1.0


@dataclass(frozen=True)
class MachineConstants:
    """Geometry anchors and guard margins (SI units).

    Attributes
    ----------
    pole_pairs : int
        p; the simulated sector spans ``pi / p / ... `` one pole
        (``2*pi / (2*p)``), with antiperiodic cuts.
    slots_per_sector : int
        Stator slots inside one sector (36 slots total for the default 6).
    shaft_radius, rotor_outer_radius, stator_outer_radius, air_gap : float
        Fixed radii [m]; the stator bore is rotor outer radius + air gap
        and the mortar coupling circle sits mid-gap.
    pocket_width : float
        Width of each air pocket flanking the magnet [m].
    bridge_min, magnet_clearance, sector_margin_deg, tooth_min_width,
    yoke_min, slot_body_min_height : float
        Margins used by the feasibility map.
    gap_clearance_frac : float
        Fraction of the air gap that deformed iron surfaces must keep clear
        of the coupling circle.
    slot_phase_pattern : tuple of str
        Winding layout of the sector slots in angular order.  The default
        band order and signs make the stator field co-rotate with the
        rotor, so torque is beta-independent up to slot ripple and peak
        torque for the baseline design falls near zero current angle.
    """

    pole_pairs: int = 3
    slots_per_sector: int = 6
    shaft_radius: float = 0.016
    rotor_outer_radius: float = 0.045
    stator_outer_radius: float = 0.0825
    air_gap: float = 0.001
    pocket_width: float = 0.003
    bridge_min: float = 0.0005
    magnet_clearance: float = 0.001
    sector_margin_deg: float = 3.0
    tooth_min_width: float = 0.0015
    yoke_min: float = 0.008
    slot_body_min_height: float = 0.002
    gap_clearance_frac: float = 0.25
    gap_split_frac: float = 0.5
    slot_phase_pattern: tuple[str, ...] = ("A+", "A+", "B-", "B-", "C+", "C+")

    def __post_init__(self):
        if self.pole_pairs < 1:
            raise ValueError("pole_pairs must be >= 1")
        if len(self.slot_phase_pattern) != self.slots_per_sector:
            raise ValueError("slot_phase_pattern length must equal slots_per_sector")
        for token in self.slot_phase_pattern:
            parse_phase_token(token)
        if not 0 < self.shaft_radius < self.rotor_outer_radius:
            raise ValueError("need 0 < shaft radius < rotor outer radius")
        if self.air_gap <= 0:
            raise ValueError("air gap must be positive")
        if self.stator_inner_radius >= self.stator_outer_radius:
            raise ValueError("stator bore beyond stator outer radius")

    @property
    def sector_angle(self) -> float:
        """Angular span of the simulated sector (one pole) [rad]."""
        return np.pi / self.pole_pairs

    @property
    def stator_inner_radius(self) -> float:
        return self.rotor_outer_radius + self.air_gap

    @property
    def coupling_radius(self) -> float:
        """Radius of the mortar coupling circle (mid-gap)."""
        return self.rotor_outer_radius + self.gap_split_frac * self.air_gap

    @property
    def slot_pitch(self) -> float:
        """Angular pitch between adjacent slots [rad]."""
        return self.sector_angle / self.slots_per_sector

    @property
    def pole_center(self) -> float:
        """Machine-frame angle of the pole axis [rad]."""
        return 0.5 * self.sector_angle

    def phase_layout(self) -> list[tuple[int, float]]:
        return [parse_phase_token(t) for t in self.slot_phase_pattern]
