"""Design vector for the motor optimization.

22 variables: 12 scalar parameters plus 5 rotor and 5 stator surface
control-point offsets.  All lengths are metres and angles radians
internally; the CLI and config layer convert from mm / degrees.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

MM = 1e-3
DEG = np.pi / 180.0

N_SURFACE_OFFSETS = 5

#: Flat ordering of the design variables.
VARIABLE_NAMES: tuple[str, ...] = (
    "L", "phi0", "kR",
    "MAG", "MH", "MW",
    "SD1", "SR1", "SW1", "SW2", "SW3", "SW4",
    *[f"rotor_offset_{i}" for i in range(1, N_SURFACE_OFFSETS + 1)],
    *[f"stator_offset_{i}" for i in range(1, N_SURFACE_OFFSETS + 1)],
)

N_VARIABLES = len(VARIABLE_NAMES)  # 22


def _as_offsets(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (N_SURFACE_OFFSETS,):
        raise ValueError(f"expected {N_SURFACE_OFFSETS} offsets, got shape {arr.shape}")
    return arr


@dataclass
class DesignVector:
    """One point in design space (SI units).

    Attributes
    ----------
    L : float
        Active (stack) length [m].
    phi0 : float
        Current phase angle at rotor angle zero [rad].
    kR : float
        Scaling factor applied to all radial dimensions in the closed-form
        scaling laws; the cross-section itself is always built at
        reference size.
    MAG : float
        Radial depth from the rotor surface to the top of the magnet
        cavity [m].
    MH, MW : float
        Magnet height (radial) and width (tangential) [m].
    SD1 : float
        Slot bottom diameter [m]; the stator slots end on the circle of
        radius SD1/2.
    SR1 : float
        Radial height of the slot opening wedge [m].
    SW1, SW2, SW3, SW4 : float
        Slot widths [m]: at mid-body, at the wedge top, at the opening,
        and at the slot bottom.
    rotor_offsets, stator_offsets : ndarray, shape (5,)
        Radial displacements of the movable surface control points [m].
        Positive moves outward on both surfaces.
    """

    L: float = 100 * MM
    phi0: float = 0.0
    kR: float = 1.0
    MAG: float = 7 * MM
    MH: float = 7 * MM
    MW: float = 19 * MM
    SD1: float = 135 * MM
    SR1: float = 1 * MM
    SW1: float = 4 * MM
    SW2: float = 2.3 * MM
    SW3: float = 1 * MM
    SW4: float = 8.25 * MM
    rotor_offsets: np.ndarray = field(default_factory=lambda: np.zeros(N_SURFACE_OFFSETS))
    stator_offsets: np.ndarray = field(default_factory=lambda: np.zeros(N_SURFACE_OFFSETS))

    def __post_init__(self):
        self.rotor_offsets = _as_offsets(self.rotor_offsets)
        self.stator_offsets = _as_offsets(self.stator_offsets)

    def as_array(self) -> np.ndarray:
        return np.concatenate((
            [self.L, self.phi0, self.kR,
             self.MAG, self.MH, self.MW,
             self.SD1, self.SR1, self.SW1, self.SW2, self.SW3, self.SW4],
            self.rotor_offsets, self.stator_offsets,
        ))

    @classmethod
    def from_array(cls, x) -> "DesignVector":
        x = np.asarray(x, dtype=float)
        if x.shape != (N_VARIABLES,):
            raise ValueError(f"expected shape ({N_VARIABLES},), got {x.shape}")
        return cls(*x[:12], rotor_offsets=x[12:17], stator_offsets=x[17:22])

    def replace(self, **kwargs) -> "DesignVector":
        return replace(self, **kwargs)

    def with_variable(self, index: int, value: float) -> "DesignVector":
        """Copy with the flat variable `index` set to `value`."""
        x = self.as_array()
        x[index] = value
        return DesignVector.from_array(x)

    def to_display_dict(self) -> dict[str, float]:
        """Values in mm / degrees for reports and config files."""
        out: dict[str, float] = {}
        for name, value in zip(VARIABLE_NAMES, self.as_array()):
            if name == "phi0":
                out[name] = value / DEG
            elif name == "kR":
                out[name] = value
            else:
                out[name] = value / MM
        return out

    @classmethod
    def from_display_dict(cls, values: dict) -> "DesignVector":
        x = initial_design().as_array()
        index = {name: i for i, name in enumerate(VARIABLE_NAMES)}
        for key, value in values.items():
            if key == "rotor_offsets":
                x[12:17] = np.asarray(value, dtype=float) * MM
                continue
            if key == "stator_offsets":
                x[17:22] = np.asarray(value, dtype=float) * MM
                continue
            if key not in index:
                raise KeyError(f"unknown design variable {key!r}")
            i = index[key]
            if key == "phi0":
                x[i] = float(value) * DEG
            elif key == "kR":
                x[i] = float(value)
            else:
                x[i] = float(value) * MM
        return cls.from_array(x)


def initial_design() -> DesignVector:
    """Nominal starting design (all surface offsets zero)."""
    return DesignVector()


@dataclass(frozen=True)
class DesignBounds:
    """Box bounds; normalization maps the box onto [0, 1]^22."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        up = np.asarray(self.upper, dtype=float)
        if lo.shape != (N_VARIABLES,) or up.shape != (N_VARIABLES,):
            raise ValueError("bounds must have one entry per design variable")
        if not np.all(up > lo):
            raise ValueError("upper bounds must exceed lower bounds")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def normalize(self, design: DesignVector | np.ndarray) -> np.ndarray:
        x = design.as_array() if isinstance(design, DesignVector) else np.asarray(design, float)
        return (x - self.lower) / self.span

    def denormalize(self, z) -> DesignVector:
        z = np.asarray(z, dtype=float)
        return DesignVector.from_array(self.lower + z * self.span)

    def clip(self, design: DesignVector) -> DesignVector:
        return DesignVector.from_array(
            np.clip(design.as_array(), self.lower, self.upper))

    def contains(self, design: DesignVector, tol: float = 1e-12) -> bool:
        x = design.as_array()
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


def default_bounds(offset_limit: float = 0.3 * MM) -> DesignBounds:
    """Standard optimization box.

    Surface offsets are limited to ``offset_limit`` (30 % of the nominal
    air gap) so the gap layers cannot be pinched shut.
    """
    lower = np.concatenate((
        [80 * MM, -20 * DEG, 0.5,
         6 * MM, 2 * MM, 10 * MM,
         90 * MM, 0.5 * MM, 2 * MM, 1 * MM, 0.5 * MM, 2 * MM],
        np.full(2 * N_SURFACE_OFFSETS, -offset_limit),
    ))
    upper = np.concatenate((
        [120 * MM, 20 * DEG, 2.0,
         15 * MM, 12 * MM, 25 * MM,
         160 * MM, 2 * MM, 6 * MM, 4 * MM, 1.5 * MM, 20 * MM],
        np.full(2 * N_SURFACE_OFFSETS, offset_limit),
    ))
    return DesignBounds(lower, upper)
