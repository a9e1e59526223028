"""Construction of the motor cross-section as a conforming multipatch model.

One pole (a 60 degree sector for the default three pole pairs) is meshed
with rational biquadratic Bezier patches:

* rotor: 5 columns x 4 rows.  The cavity row holds pocket / magnet /
  pocket; the outermost row is the rotor half of the air gap, bounded by
  the mortar coupling circle at mid-gap.
* stator: 6 slot units, each 3 columns (tooth half, slot, tooth half)
  x 4 rows (gap layer, slot opening wedge, slot body, yoke).

All edges shared by two patches are built once and reused, so interfaces
are conforming by construction and are recorded explicitly.  The rotor
surface arcs and both sides of the gap layers split at design-independent
angles, so the gap layers are plain annular strips with positive Jacobian
for every admissible design; the thick cap row absorbs the angular drift
of the cavity corners through slanted radial edges.  Keeping the coupling
edges at fixed angles also keeps the mortar coupling matrices constant
during shape optimization.

Surface shape control: the middle control point of each of the 5 rotor
surface arcs, and, per interior tooth, the bore control point on the tooth
axis plus the middle control points of the two arcs meeting there, move
radially by the design offsets.
"""
from __future__ import annotations

import numpy as np

from ..splines import RationalCurve, coons_patch, make_arc, make_line
from .design import VARIABLE_NAMES, DesignVector
from .machine import MachineConstants
from .patchwork import (BoundaryEdge, GeometryError, Interface,
                        MachinePatchwork, Patch)

#: Fixed fractions of the sector at which the rotor surface arcs (and the
#: rotor-side coupling edges) split.  Chosen near the nominal cavity corner
#: angles so the cap row stays mildly sheared; keeping them design
#: independent keeps the mortar coupling matrices constant.
ROTOR_SURFACE_SPLITS = (0.0, 0.2, 16.0 / 60.0, 44.0 / 60.0, 0.8, 1.0)
#: Fixed fractions of one slot pitch for the stator-side coupling edges,
#: centered on the nominal slot opening corners.
STATOR_GAP_SPLITS = (0.44, 0.56)

ROTOR_ROW_NAMES = ("hub", "cavity", "cap", "gap")
ROTOR_RADIAL_HINT = (3, 2, 2, 2)
ROTOR_ANGULAR_HINT = (4, 3, 8, 3, 4)
STATOR_ROW_NAMES = ("air", "tip", "body", "yoke")
STATOR_RADIAL_HINT = (2, 1, 4, 2)
STATOR_COL_NAMES = ("tL", "mid", "tR")
STATOR_ANGULAR_HINT = (2, 4, 2)


def _unit(theta: float) -> np.ndarray:
    return np.array([np.cos(theta), np.sin(theta)])


def _polar(r: float, theta: float) -> np.ndarray:
    return r * _unit(theta)


def _rot(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _shift_radially(curve: RationalCurve, indices, delta: float) -> RationalCurve:
    """Move selected control points of `curve` radially by `delta`."""
    ctrl = curve.ctrl.copy()
    for i in indices:
        angle = np.arctan2(ctrl[i, 1], ctrl[i, 0])
        ctrl[i] = ctrl[i] + delta * _unit(angle)
    return RationalCurve(curve.kv, ctrl, curve.weights)


def _require(condition: bool, message: str):
    if not condition:
        raise GeometryError(message)


def _rotor(design: DesignVector, constants: MachineConstants):
    p = constants
    R_sh, R_r, R_ag = p.shaft_radius, p.rotor_outer_radius, p.coupling_radius
    sector, center = p.sector_angle, p.pole_center

    wc = 0.5 * design.MW + p.pocket_width   # cavity half width
    wm = 0.5 * design.MW                    # magnet half width
    y_t = R_r - design.MAG                  # cavity top (pole frame)
    y_b = y_t - design.MH                   # cavity bottom

    _require(design.MH > 0 and design.MW > 0 and design.MAG > 0,
             "magnet dimensions must be positive")
    _require(y_b > R_sh, "magnet cavity reaches the shaft")
    r_b, r_t = np.hypot(wc, y_b), np.hypot(wc, y_t)
    _require(r_t < R_r, "magnet cavity breaks the rotor surface")
    gam_b, gam_t = np.arctan2(wc, y_b), np.arctan2(wc, y_t)
    gam_mb, gam_mt = np.arctan2(wm, y_b), np.arctan2(wm, y_t)
    _require(gam_b < 0.5 * sector, "magnet cavity spans the sector cut")

    to_machine = _rot(center - 0.5 * np.pi)

    def local(x: float, y: float) -> np.ndarray:
        # pole frame: +y on the pole axis, +x toward smaller machine angle
        return to_machine @ np.array([x, y])

    # column boundary anchors, left (smaller machine angle) to right
    xs = (wc, wm, -wm, -wc)
    ang_b = [center - np.arctan2(x, y_b) for x in xs]
    ang_t = [center - np.arctan2(x, y_t) for x in xs]
    corners_b = [local(x, y_b) for x in xs]
    corners_t = [local(x, y_t) for x in xs]
    ang_fix = [f * sector for f in ROTOR_SURFACE_SPLITS]

    # vertical (radial) boundary curves: vert[j][row], j = 0..5.  The cap
    # row connects the moving cavity corners to the fixed surface splits.
    def cut_column(theta: float):
        radii = (R_sh, r_b, r_t, R_r, R_ag)
        return [make_line(_polar(radii[k], theta), _polar(radii[k + 1], theta))
                for k in range(4)]

    vert = [cut_column(0.0)]
    for j in range(4):
        vert.append([
            make_line(_polar(R_sh, ang_b[j]), corners_b[j]),
            make_line(corners_b[j], corners_t[j]),
            make_line(corners_t[j], _polar(R_r, ang_fix[j + 1])),
            make_line(_polar(R_r, ang_fix[j + 1]), _polar(R_ag, ang_fix[j + 1])),
        ])
    vert.append(cut_column(sector))

    # horizontal (angular) boundary curves: horiz[level][col], level = 0..4
    shaft_angles = [0.0, *ang_b, sector]
    _require(all(a < b for a, b in zip(shaft_angles, shaft_angles[1:])),
             "cavity corner angles are not increasing")

    horiz = [[make_arc(R_sh, shaft_angles[c], shaft_angles[c + 1]) for c in range(5)]]
    for y, corners, angles in ((y_b, corners_b, ang_b), (y_t, corners_t, ang_t)):
        r_out = np.hypot(wc, y)
        horiz.append([
            make_arc(r_out, 0.0, angles[0]),
            make_line(corners[0], corners[1]),
            make_line(corners[1], corners[2]),
            make_line(corners[2], corners[3]),
            make_arc(r_out, angles[3], sector),
        ])
    surface = [make_arc(R_r, ang_fix[c], ang_fix[c + 1]) for c in range(5)]
    surface = [_shift_radially(arc, [1], d)
               for arc, d in zip(surface, design.rotor_offsets)]
    horiz.append(surface)
    horiz.append([make_arc(R_ag, ang_fix[c], ang_fix[c + 1]) for c in range(5)])

    materials = [["iron"] * 5,
                 ["iron", "air", "magnet", "air", "iron"],
                 ["iron"] * 5,
                 ["air"] * 5]
    patches = []
    for r in range(4):
        for c in range(5):
            surf = coons_patch(vert[c][r], vert[c + 1][r], horiz[r][c], horiz[r + 1][c])
            patches.append(Patch(
                name=f"rotor_{ROTOR_ROW_NAMES[r]}{c}",
                surface=surf, material=materials[r][c], region="rotor",
                elements_hint=(ROTOR_RADIAL_HINT[r], ROTOR_ANGULAR_HINT[c])))

    def idx(r: int, c: int) -> int:
        return 5 * r + c

    interfaces = []
    for r in range(3):
        for c in range(5):
            interfaces.append(Interface(idx(r, c), "outer", idx(r + 1, c), "inner"))
    for r in range(4):
        for c in range(4):
            interfaces.append(Interface(idx(r, c), "end", idx(r, c + 1), "start"))
        interfaces.append(Interface(idx(r, 0), "start", idx(r, 4), "end", sign=-1.0))

    dirichlet = [BoundaryEdge(idx(0, c), "inner") for c in range(5)]
    coupling = [BoundaryEdge(idx(3, c), "outer") for c in range(5)]
    surface_edges = [BoundaryEdge(idx(3, c), "inner") for c in range(5)]
    return patches, interfaces, dirichlet, coupling, surface_edges


def _stator(design: DesignVector, constants: MachineConstants, base: int):
    p = constants
    R_si, R_ag, R_so = p.stator_inner_radius, p.coupling_radius, p.stator_outer_radius
    r_tip = R_si + design.SR1
    r_sb = 0.5 * design.SD1
    pitch = p.slot_pitch
    n_units = p.slots_per_sector
    a1, a2, a3, a4 = (0.5 * design.SW1, 0.5 * design.SW2,
                      0.5 * design.SW3, 0.5 * design.SW4)

    _require(min(a1, a2, a3, a4) > 0, "slot widths must be positive")
    _require(design.SR1 > 0, "slot opening height must be positive")
    _require(r_sb > r_tip, "slot bottom circle must lie beyond the opening wedge")
    _require(r_sb < R_so, "slot bottom circle beyond the stator outer radius")
    _require(a3 < R_si and a2 < r_tip and a4 < r_sb, "slot wider than its circle")
    phi3 = np.arcsin(a3 / R_si)
    phi2 = np.arcsin(a2 / r_tip)
    phi4 = np.arcsin(a4 / r_sb)
    for phi, what in ((phi3, "opening"), (phi2, "wedge top"), (phi4, "bottom")):
        _require(phi < 0.5 * pitch, f"slot {what} pinches off the tooth")
    offset_ok = np.all(np.abs(design.stator_offsets) < design.SR1)
    _require(bool(offset_ok), "stator offsets exceed the opening wedge height")

    # unit boundary curves at tooth axes; interior axes carry the offsets
    deltas = np.zeros(n_units + 1)
    deltas[1:n_units] = design.stator_offsets
    bore_corners = [_polar(R_si + deltas[k], k * pitch) for k in range(n_units + 1)]
    axis = []
    for k in range(n_units + 1):
        th = k * pitch
        axis.append([
            make_line(_polar(R_ag, th), bore_corners[k]),
            make_line(bore_corners[k], _polar(r_tip, th)),
            make_line(_polar(r_tip, th), _polar(r_sb, th)),
            make_line(_polar(r_sb, th), _polar(R_so, th)),
        ])

    patches: list[Patch] = []
    interfaces: list[Interface] = []
    dirichlet: list[BoundaryEdge] = []
    coupling: list[BoundaryEdge] = []
    bore_edges: list[BoundaryEdge] = []
    layout = constants.phase_layout()

    def idx(unit: int, row: int, col: int) -> int:
        return base + 12 * unit + 3 * row + col

    for k in range(n_units):
        th0, th1 = k * pitch, (k + 1) * pitch
        th_s = th0 + 0.5 * pitch
        to_machine = _rot(th_s - 0.5 * np.pi)

        def local(x: float, y: float) -> np.ndarray:
            return to_machine @ np.array([x, y])

        y3 = np.sqrt(R_si ** 2 - a3 ** 2)
        y2 = np.sqrt(r_tip ** 2 - a2 ** 2)
        y4 = np.sqrt(r_sb ** 2 - a4 ** 2)
        o_l, o_r = local(a3, y3), local(-a3, y3)
        w_l, w_r = local(a2, y2), local(-a2, y2)
        b_l, b_r = local(a4, y4), local(-a4, y4)
        m_l, m_r = local(a1, 0.5 * (y2 + y4)), local(-a1, 0.5 * (y2 + y4))

        gam = [th0 + f * pitch for f in STATOR_GAP_SPLITS]
        gap_arcs = [make_arc(R_ag, th0, gam[0]), make_arc(R_ag, gam[0], gam[1]),
                    make_arc(R_ag, gam[1], th1)]
        bore = [make_arc(R_si, th0, th_s - phi3),
                make_arc(R_si, th_s - phi3, th_s + phi3),
                make_arc(R_si, th_s + phi3, th1)]
        bore[0] = _shift_radially(bore[0], [0, 1], deltas[k])
        bore[2] = _shift_radially(bore[2], [1, 2], deltas[k + 1])
        tip = [make_arc(r_tip, th0, th_s - phi2),
               make_arc(r_tip, th_s - phi2, th_s + phi2),
               make_arc(r_tip, th_s + phi2, th1)]
        sb = [make_arc(r_sb, th0, th_s - phi4),
              make_arc(r_sb, th_s - phi4, th_s + phi4),
              make_arc(r_sb, th_s + phi4, th1)]
        so = [make_arc(R_so, th0, th_s - phi4),
              make_arc(R_so, th_s - phi4, th_s + phi4),
              make_arc(R_so, th_s + phi4, th1)]

        open_l = make_line(_polar(R_ag, gam[0]), o_l)
        open_r = make_line(_polar(R_ag, gam[1]), o_r)
        wedge_l = make_line(o_l, w_l)
        wedge_r = make_line(o_r, w_r)
        wall_l = RationalCurve(wedge_l.kv, np.array([w_l, m_l, b_l]), np.ones(3))
        wall_r = RationalCurve(wedge_r.kv, np.array([w_r, m_r, b_r]), np.ones(3))
        ray_l = make_line(b_l, _polar(R_so, th_s - phi4))
        ray_r = make_line(b_r, _polar(R_so, th_s + phi4))

        rows = [
            # (bottom verticals, left arcs, right arcs, materials)
            ((axis[k][0], open_l, open_r, axis[k + 1][0]),
             gap_arcs, bore, ("air", "air", "air")),
            ((axis[k][1], wedge_l, wedge_r, axis[k + 1][1]),
             bore, tip, ("iron", "air", "iron")),
            ((axis[k][2], wall_l, wall_r, axis[k + 1][2]),
             tip, sb, ("iron", "copper", "iron")),
            ((axis[k][3], ray_l, ray_r, axis[k + 1][3]),
             sb, so, ("iron", "iron", "iron")),
        ]
        for r, (verts, inner, outer, mats) in enumerate(rows):
            for c in range(3):
                surf = coons_patch(verts[c], verts[c + 1], inner[c], outer[c])
                slot = k if (r == 2 and c == 1) else None
                patches.append(Patch(
                    name=f"stator{k}_{STATOR_ROW_NAMES[r]}_{STATOR_COL_NAMES[c]}",
                    surface=surf, material=mats[c], region="stator",
                    elements_hint=(STATOR_RADIAL_HINT[r], STATOR_ANGULAR_HINT[c]),
                    slot=slot, phase=layout[k] if slot is not None else None))

        for r in range(3):
            for c in range(3):
                interfaces.append(Interface(idx(k, r, c), "outer",
                                            idx(k, r + 1, c), "inner"))
        for r in range(4):
            interfaces.append(Interface(idx(k, r, 0), "end", idx(k, r, 1), "start"))
            interfaces.append(Interface(idx(k, r, 1), "end", idx(k, r, 2), "start"))
        if k > 0:
            for r in range(4):
                interfaces.append(Interface(idx(k - 1, r, 2), "end",
                                            idx(k, r, 0), "start"))

        dirichlet.extend(BoundaryEdge(idx(k, 3, c), "outer") for c in range(3))
        coupling.extend(BoundaryEdge(idx(k, 0, c), "inner") for c in range(3))
        bore_edges.extend(BoundaryEdge(idx(k, 0, c), "outer") for c in range(3))

    for r in range(4):
        interfaces.append(Interface(idx(0, r, 0), "start",
                                    idx(n_units - 1, r, 2), "end", sign=-1.0))
    return patches, interfaces, dirichlet, coupling, bore_edges


def variable_side(index: int) -> str:
    """Which side of the air gap a geometry variable rebuilds.

    Useful for callers that difference patch maps per variable: the other
    side's patches are bitwise unchanged and need not be rebuilt.
    """
    name = VARIABLE_NAMES[index]
    if name in ("MAG", "MH", "MW") or name.startswith("rotor_offset"):
        return "rotor"
    if name.startswith(("SD", "SR", "SW")) or name.startswith("stator_offset"):
        return "stator"
    raise ValueError(f"{name} does not move the geometry")


def side_patches(design: DesignVector, constants: MachineConstants,
                 side: str) -> list:
    """Patches of one side only, without interfaces or validation."""
    if side == "rotor":
        return _rotor(design, constants)[0]
    if side == "stator":
        return _stator(design, constants, base=0)[0]
    raise ValueError(f"unknown side {side!r}")


def build_geometry(design: DesignVector, constants: MachineConstants | None = None,
                   validate: bool = True) -> MachinePatchwork:
    """Build the conforming multipatch cross-section for one pole.

    Raises GeometryError if the design values produce an invalid layout
    (inverted widths, pinched teeth, cavity touching shaft or surface).
    """
    constants = constants or MachineConstants()
    rp, ri, rd, rc, rs = _rotor(design, constants)
    sp, si, sd, sc, sb = _stator(design, constants, base=len(rp))
    pw = MachinePatchwork(
        constants=constants, design=design,
        patches=rp + sp, interfaces=ri + si, dirichlet=rd + sd,
        coupling_rotor=rc, coupling_stator=sc,
        rotor_surface=rs, stator_bore=sb,
        magnet_axis_angle=constants.pole_center)
    if validate:
        pw.validate()
    return pw
