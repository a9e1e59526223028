"""Geometric feasibility constraints.

`feasibility` returns the constraint vector g(x) (feasible iff every entry
is <= 0, SI units) together with its Jacobian with respect to the 22
design variables.  Ten scalar rows keep the cross-section well formed
(bridge thickness, cavity clearances, slot width ordering, tooth and yoke
margins); the remaining rows sample the deformed rotor surface and stator
bore and keep them clear of the mortar coupling circle.

Gradients of the scalar rows are closed form.  For the sampled rows the
derivatives with respect to the surface offsets are evaluated analytically
from the curve basis; the weak dependence on MAG, MW and SW3 through the
drift of the arc breakpoints (which vanishes at zero offsets) is filled in
by central differences of the rebuilt curves.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..splines import eval_basis
from .builder import build_geometry
from .design import DesignVector, N_VARIABLES, VARIABLE_NAMES
from .machine import MachineConstants
from .patchwork import GeometryError, MachinePatchwork

_IDX = {name: i for i, name in enumerate(VARIABLE_NAMES)}
GAP_SAMPLE_PARAMS = (0.25, 0.5, 0.75)
#: the rotor surface arcs split at fixed angles, so only the slot opening
#: half-width still moves gap-adjacent breakpoints
_GAP_SHAPE_VARS = (_IDX["SW3"],)
_FD_STEP = 1e-7


@dataclass
class FeasibilityResult:
    values: np.ndarray
    names: list[str]
    jacobian: np.ndarray

    def max_violation(self) -> float:
        return float(max(self.values.max(), 0.0))

    def is_feasible(self, tol: float = 0.0) -> bool:
        return bool(np.all(self.values <= tol))


def _scalar_rows(design: DesignVector, constants: MachineConstants):
    p = constants
    rows: list[tuple[str, float, dict[int, float]]] = []
    pitch = p.slot_pitch

    wc = 0.5 * design.MW + p.pocket_width
    y_t = p.rotor_outer_radius - design.MAG
    y_b = y_t - design.MH
    r_t = np.hypot(wc, y_t)
    rows.append(("bridge_thickness",
                 p.bridge_min - (p.rotor_outer_radius - r_t),
                 {_IDX["MW"]: 0.5 * wc / r_t, _IDX["MAG"]: -y_t / r_t}))
    rows.append(("cavity_shaft_clearance",
                 (p.shaft_radius + p.magnet_clearance) - y_b,
                 {_IDX["MAG"]: 1.0, _IDX["MH"]: 1.0}))
    t = np.tan(p.pole_center - np.deg2rad(p.sector_margin_deg))
    rows.append(("cavity_sector_margin",
                 wc - y_b * t,
                 {_IDX["MW"]: 0.5, _IDX["MAG"]: t, _IDX["MH"]: t}))

    rows.append(("slot_width_order_3_2", design.SW3 - design.SW2,
                 {_IDX["SW3"]: 1.0, _IDX["SW2"]: -1.0}))
    rows.append(("slot_width_order_2_1", design.SW2 - design.SW1,
                 {_IDX["SW2"]: 1.0, _IDX["SW1"]: -1.0}))
    rows.append(("slot_body_height",
                 (p.stator_inner_radius + design.SR1 + p.slot_body_min_height)
                 - 0.5 * design.SD1,
                 {_IDX["SR1"]: 1.0, _IDX["SD1"]: -0.5}))
    rows.append(("tooth_width_bottom",
                 p.tooth_min_width + design.SW4 - 0.5 * design.SD1 * pitch,
                 {_IDX["SW4"]: 1.0, _IDX["SD1"]: -0.5 * pitch}))
    rows.append(("tooth_width_top",
                 p.tooth_min_width + design.SW1
                 - (p.stator_inner_radius + design.SR1) * pitch,
                 {_IDX["SW1"]: 1.0, _IDX["SR1"]: -pitch}))
    rows.append(("slot_opening_width",
                 p.tooth_min_width + design.SW3 - p.stator_inner_radius * pitch,
                 {_IDX["SW3"]: 1.0}))
    rows.append(("yoke_thickness",
                 0.5 * design.SD1 + p.yoke_min - p.stator_outer_radius,
                 {_IDX["SD1"]: 0.5}))
    return rows


def _radius_and_slopes(curve, u: float, moved: list[int]):
    """Radius of curve(u) and its derivative w.r.t. radial motion of the
    listed control points."""
    first, ders = eval_basis(curve.kv, u, 0)
    basis = ders[0]
    idx = np.arange(first, first + len(basis))
    w = curve.weights[idx]
    big_w = float(np.dot(w, basis))
    point = (w * basis) @ curve.ctrl[idx] / big_w
    rho = float(np.hypot(*point))
    direction = point / rho
    slopes = []
    for m in moved:
        local = m - first
        pm = curve.ctrl[m]
        unit_m = pm / np.hypot(*pm)
        slopes.append(float(np.dot(direction, unit_m))
                      * w[local] * basis[local] / big_w)
    return rho, slopes


def _gap_samples(pw: MachinePatchwork):
    """Sampled radii of the deformed gap surfaces with offset slopes.

    Returns (names, radii, rows of {variable: slope}, signs) where sign
    +1 means the limit is an upper bound on the radius (rotor) and -1 a
    lower bound (stator bore).
    """
    names, radii, slopes, signs = [], [], [], []
    n_units = pw.constants.slots_per_sector
    for i, ref in enumerate(pw.rotor_surface):
        curve = pw.edge_curve(ref)
        for u in GAP_SAMPLE_PARAMS:
            rho, sl = _radius_and_slopes(curve, u, [1])
            names.append(f"rotor_gap_clearance_{i}_{u:g}")
            radii.append(rho)
            slopes.append({_IDX[f"rotor_offset_{i + 1}"]: sl[0]})
            signs.append(1.0)
    for k in range(n_units):
        for col, moved, var in ((0, [0, 1], k - 1), (2, [1, 2], k)):
            if not 0 <= var < 5:
                continue
            curve = pw.edge_curve(pw.stator_bore[3 * k + col])
            us = (0.0, *GAP_SAMPLE_PARAMS) if col == 0 else GAP_SAMPLE_PARAMS
            for u in us:
                rho, sl = _radius_and_slopes(curve, u, moved)
                names.append(f"stator_gap_clearance_{k}_{col}_{u:g}")
                radii.append(rho)
                slopes.append({_IDX[f"stator_offset_{var + 1}"]: sum(sl)})
                signs.append(-1.0)
    return names, np.array(radii), slopes, np.array(signs)


def _proxy_gap_rows(design: DesignVector, constants: MachineConstants):
    """Fallback when the cross-section cannot be built: bound the offsets
    directly, which the sampled rows imply."""
    names, vals, grads = [], [], []
    limit = constants.gap_clearance_frac * constants.air_gap
    for label, base in (("rotor", _IDX["rotor_offset_1"]),
                        ("stator", _IDX["stator_offset_1"])):
        offs = design.rotor_offsets if label == "rotor" else design.stator_offsets
        for i, d in enumerate(offs):
            names.append(f"{label}_gap_clearance_proxy_{i}")
            vals.append(abs(d) - limit)
            grads.append({base + i: float(np.sign(d)) if d != 0 else 0.0})
    return names, vals, grads


def feasibility(design: DesignVector,
                constants: MachineConstants | None = None,
                patchwork: MachinePatchwork | None = None) -> FeasibilityResult:
    constants = constants or MachineConstants()
    names: list[str] = []
    values: list[float] = []
    jac = []

    def add(name: str, value: float, grad: dict[int, float]):
        row = np.zeros(N_VARIABLES)
        for i, coef in grad.items():
            row[i] = coef
        names.append(name)
        values.append(value)
        jac.append(row)

    for name, value, grad in _scalar_rows(design, constants):
        add(name, value, grad)

    try:
        pw = patchwork or build_geometry(design, constants, validate=False)
    except GeometryError:
        pw = None
    if pw is None:
        for name, value, grad in zip(*_proxy_gap_rows(design, constants)):
            add(name, value, grad)
        return FeasibilityResult(np.array(values), names, np.array(jac))

    gnames, radii, slopes, signs = _gap_samples(pw)
    clear = constants.gap_clearance_frac * constants.air_gap
    upper = constants.coupling_radius - clear
    lower = constants.coupling_radius + clear
    limits = np.where(signs > 0, upper, lower)
    gvals = signs * (radii - limits)
    grows = [np.zeros(N_VARIABLES) for _ in gnames]
    for row, grad, sign in zip(grows, slopes, signs):
        for i, coef in grad.items():
            row[i] = sign * coef

    # breakpoint drift: second order in the offsets, by central differences
    if np.any(design.rotor_offsets) or np.any(design.stator_offsets):
        x0 = design.as_array()
        for var in _GAP_SHAPE_VARS:
            plus = x0.copy(); plus[var] += _FD_STEP
            minus = x0.copy(); minus[var] -= _FD_STEP
            try:
                pw_p = build_geometry(DesignVector.from_array(plus), constants,
                                      validate=False)
                pw_m = build_geometry(DesignVector.from_array(minus), constants,
                                      validate=False)
            except GeometryError:
                continue
            _, r_p, _, _ = _gap_samples(pw_p)
            _, r_m, _, _ = _gap_samples(pw_m)
            col = signs * (r_p - r_m) / (2.0 * _FD_STEP)
            for row, c in zip(grows, col):
                row[var] += c

    for name, value, row in zip(gnames, gvals, grows):
        names.append(name)
        values.append(float(value))
        jac.append(row)
    return FeasibilityResult(np.array(values), names, np.array(jac))
