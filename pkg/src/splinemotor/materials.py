"""Material models for the magnetostatic solver.

A :class:`BHCurve` turns tabulated single-valued magnetization data into a
C1 reluctivity spline ``nu(B^2)`` (monotone cubic through the samples, with
derivative) plus a linear-in-H vacuum-slope extrapolation beyond the last
sample.  :class:`Material` bundles the magnetic law with region data
(density, cost factor, magnet remanence and orientation).

Reluctivity is parametrized by ``B^2`` because that is the quantity the
assembly produces directly from ``|grad A|^2``; the Newton tangent needs
``d nu / d B^2`` which the spline provides analytically.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import numpy.typing as npt
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

MU0 = 4e-7 * np.pi
NU0 = 1.0 / MU0

IRON = "iron"
AIR = "air"
COPPER = "copper"
MAGNET = "magnet"


class BHCurveError(ValueError):
    """Raised for malformed or non-physical BH data."""


@dataclass
class BHCurve:
    """Reluctivity model built from sampled (B, H) pairs.

    Parameters
    ----------
    B : numpy.ndarray
        Flux density samples [T], strictly increasing, starting at 0.
    H : numpy.ndarray
        Field strength samples [A/m], non-decreasing, H[0] = 0.

    Beyond the last sample the curve continues with vacuum differential
    permeability: ``H(B) = H_n + (B - B_n) / mu0``.
    """

    B: np.ndarray
    H: np.ndarray
    _spline: CubicHermiteSpline = field(init=False, repr=False)
    _s_end: float = field(init=False, repr=False)
    _c_ext: float = field(init=False, repr=False)

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        H = np.asarray(self.H, dtype=float)
        if B.ndim != 1 or B.shape != H.shape or B.size < 2:
            raise BHCurveError("need matching 1-D B and H arrays with >= 2 samples")
        if B[0] != 0.0 or H[0] != 0.0:
            raise BHCurveError("BH table must start at (0, 0)")
        if np.any(np.diff(B) <= 0):
            raise BHCurveError("B samples must be strictly increasing")
        if np.any(np.diff(H) < 0):
            raise BHCurveError("H samples must be non-decreasing")
        if np.any(H < 0):
            raise BHCurveError("H samples must be non-negative")
        self.B = B
        self.H = H

        s = B**2
        nu = np.empty_like(B)
        nu[1:] = H[1:] / B[1:]
        nu[0] = nu[1]  # secant limit through the origin
        if np.any(nu > NU0 + 1e-9):
            raise BHCurveError("reluctivity above vacuum: non-physical BH data")
        # c_ext parametrizes the closed-form tail nu(s) = c/sqrt(s) + nu0
        self._s_end = s[-1]
        self._c_ext = H[-1] - B[-1] * NU0
        slopes = PchipInterpolator(s, nu).derivative()(s)
        # make the junction to the vacuum tail C1 when the terminal data
        # trend is compatible with it (any realistic saturating curve);
        # degenerate tables (e.g. linear two-point) keep their exact
        # in-range values with a C0 junction instead
        tail = self._ext_dnu(np.array([self._s_end]))[0]
        if abs(tail - slopes[-1]) <= 0.5 * (abs(tail) + abs(slopes[-1])):
            slopes[-1] = tail
        self._spline = CubicHermiteSpline(s, nu, slopes)

    def _ext_nu(self, s):
        return self._c_ext / np.sqrt(s) + NU0

    def _ext_dnu(self, s):
        return -0.5 * self._c_ext / s**1.5

    def nu(self, B2: npt.ArrayLike) -> np.ndarray:
        """Reluctivity at ``B2 = |B|^2`` [T^2]; vectorized."""
        s = np.asarray(B2, dtype=float)
        out = np.empty_like(s)
        inside = s <= self._s_end
        out[inside] = self._spline(s[inside])
        if np.any(~inside):
            out[~inside] = self._ext_nu(s[~inside])
        return out

    def dnu_dB2(self, B2: npt.ArrayLike) -> np.ndarray:
        """Derivative of :meth:`nu` with respect to ``B^2``; vectorized."""
        s = np.asarray(B2, dtype=float)
        out = np.empty_like(s)
        inside = s <= self._s_end
        out[inside] = self._spline.derivative()(s[inside])
        if np.any(~inside):
            out[~inside] = self._ext_dnu(s[~inside])
        return out

    def h_of_b(self, B: npt.ArrayLike) -> np.ndarray:
        B = np.asarray(B, dtype=float)
        return self.nu(B**2) * B

    @classmethod
    def from_file(cls, path) -> "BHCurve":
        """Load a two-column text table.

        Lines starting with ``#`` are comments.  A mandatory header line
        ``order: BH`` or ``order: HB`` declares the column meaning.
        """
        order = None
        rows = []
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.lower().startswith("order:"):
                token = line.split(":", 1)[1].strip().upper()
                if token not in ("BH", "HB"):
                    raise BHCurveError(f"{path}:{lineno}: order must be BH or HB, got {token!r}")
                order = token
                continue
            parts = line.split()
            if len(parts) != 2:
                raise BHCurveError(f"{path}:{lineno}: expected two columns, got {len(parts)}")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError as exc:
                raise BHCurveError(f"{path}:{lineno}: {exc}") from exc
        if order is None:
            raise BHCurveError(f"{path}: missing 'order: BH|HB' header")
        if not rows:
            raise BHCurveError(f"{path}: no data rows")
        data = np.array(rows)
        if order == "HB":
            data = data[:, ::-1]
        return cls(B=data[:, 0], H=data[:, 1])


def builtin_bh_curve(name: str = "m27") -> BHCurve:
    """BH curve shipped with the package (currently: ``m27``)."""
    fname = {"m27": "m27_bh.txt", "m330-50a": "m27_bh.txt"}.get(name.lower())
    if fname is None:
        raise BHCurveError(f"unknown builtin BH curve {name!r}")
    with resources.as_file(resources.files("splinemotor.data") / fname) as p:
        return BHCurve.from_file(p)


@dataclass
class Material:
    """Region material: magnetic law plus bookkeeping data.

    Attributes
    ----------
    name, kind : str
        ``kind`` is one of ``iron``, ``air``, ``copper``, ``magnet``.
    density : float
        Mass density [kg/m^3] for the cost model.
    cost_factor : float
        Dimensionless material cost weight.
    bh : BHCurve, optional
        Nonlinear law (iron only).
    mu_r : float
        Relative permeability for linear materials.
    remanence : float
        Magnet remanence magnitude B_r [T] (magnet only).
    alpha : float
        Magnetization direction angle [rad]; the source vector is the
        remanence rotated a quarter turn: ``B_r * (-sin a, cos a)``.
    """

    name: str
    kind: str
    density: float = 0.0
    cost_factor: float = 0.0
    bh: BHCurve | None = None
    mu_r: float = 1.0
    remanence: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in (IRON, AIR, COPPER, MAGNET):
            raise ValueError(f"unknown material kind {self.kind!r}")
        if self.kind == IRON and self.bh is None:
            raise ValueError("iron material needs a BH curve")
        if self.mu_r <= 0:
            raise ValueError("mu_r must be positive")

    @property
    def nonlinear(self) -> bool:
        return self.bh is not None

    def nu(self, B2: npt.ArrayLike) -> np.ndarray:
        if self.bh is not None:
            return self.bh.nu(B2)
        return np.full_like(np.asarray(B2, dtype=float), NU0 / self.mu_r)

    def dnu_dB2(self, B2: npt.ArrayLike) -> np.ndarray:
        if self.bh is not None:
            return self.bh.dnu_dB2(B2)
        return np.zeros_like(np.asarray(B2, dtype=float))

    def remanence_perp(self) -> np.ndarray:
        """Quarter-turn-rotated remanence vector entering the weak form."""
        return self.remanence * np.array([-np.sin(self.alpha), np.cos(self.alpha)])

    def rotated(self, dalpha: float) -> "Material":
        return replace(self, alpha=self.alpha + dalpha)


def default_materials(
    bh: BHCurve | None = None,
    remanence: float = 1.0,
    magnet_mu_r: float = 1.05,
    iron_density: float = 7700.0,
    copper_density: float = 8960.0,
    magnet_density: float = 7500.0,
    iron_cost: float = 2.0,
    copper_cost: float = 10.0,
    magnet_cost: float = 50.0,
) -> dict[str, Material]:
    """Material set keyed by kind, with the documented default data."""
    bh = bh if bh is not None else builtin_bh_curve("m27")
    return {
        IRON: Material("lamination steel", IRON, iron_density, iron_cost, bh=bh),
        AIR: Material("air", AIR),
        COPPER: Material("slot copper", COPPER, copper_density, copper_cost),
        MAGNET: Material(
            "permanent magnet", MAGNET, magnet_density, magnet_cost,
            mu_r=magnet_mu_r, remanence=remanence,
        ),
    }
