"""Multipatch containers for the motor cross-section.

A `MachinePatchwork` is a list of rational Bezier patches together with
explicit connectivity: patch-to-patch interfaces (including the signed
antiperiodic pairs across the sector cut), Dirichlet edges, and the two
ordered edge lists on the mortar coupling circle.  Connectivity is recorded
while the geometry is built; nothing downstream matches coordinates.

Patch parameterization convention: u runs radially outward, v runs
counterclockwise, so det(Jacobian) > 0 everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ..splines import RationalCurve, SplineSurface, element_quadrature

#: Edge names: 'start'/'end' are the v = 0 / v = 1 edges (radial curves),
#: 'inner'/'outer' the u = 0 / u = 1 edges (angular curves).
EDGES = ("start", "end", "inner", "outer")


class GeometryError(ValueError):
    """Raised when design values produce an invalid cross-section."""


@dataclass
class Patch:
    name: str
    surface: SplineSurface
    material: str                      # 'iron' | 'air' | 'copper' | 'magnet'
    region: str                        # 'rotor' | 'stator'
    elements_hint: tuple[int, int] = (1, 1)   # (radial, angular) at refine level 1
    slot: int | None = None            # slot index for copper patches
    phase: tuple[int, float] | None = None    # (phase index, winding sign)

    def edge_curve(self, edge: str) -> RationalCurve:
        s = self.surface
        if edge == "start":
            return RationalCurve(s.kv_u, s.ctrl[:, 0, :], s.weights[:, 0])
        if edge == "end":
            return RationalCurve(s.kv_u, s.ctrl[:, -1, :], s.weights[:, -1])
        if edge == "inner":
            return RationalCurve(s.kv_v, s.ctrl[0, :, :], s.weights[0, :])
        if edge == "outer":
            return RationalCurve(s.kv_v, s.ctrl[-1, :, :], s.weights[-1, :])
        raise ValueError(f"unknown edge {edge!r}")


@dataclass(frozen=True)
class Interface:
    """Shared edge between two patches.

    Both edges run in the same parametric direction by construction.
    `sign` is +1 for a plain conforming interface and -1 for the
    antiperiodic identification across the sector cut, where patch `a`
    holds the edge at angle 0 and patch `b` the edge at the sector angle.
    """

    a: int
    edge_a: str
    b: int
    edge_b: str
    sign: float = 1.0


@dataclass(frozen=True)
class BoundaryEdge:
    patch: int
    edge: str


@dataclass
class MachinePatchwork:
    constants: "MachineConstants"
    design: "DesignVector"
    patches: list[Patch]
    interfaces: list[Interface]
    dirichlet: list[BoundaryEdge]
    coupling_rotor: list[BoundaryEdge]     # ordered CCW along the coupling circle
    coupling_stator: list[BoundaryEdge]
    rotor_surface: list[BoundaryEdge]      # deformable rotor surface, ordered CCW
    stator_bore: list[BoundaryEdge]        # deformable stator bore, ordered CCW
    magnet_axis_angle: float = 0.0         # remanence direction in machine frame

    def __post_init__(self):
        self._index = {p.name: i for i, p in enumerate(self.patches)}
        if len(self._index) != len(self.patches):
            raise ValueError("duplicate patch names")

    def __len__(self) -> int:
        return len(self.patches)

    def index(self, name: str) -> int:
        return self._index[name]

    def patch(self, name: str) -> Patch:
        return self.patches[self._index[name]]

    def edge_curve(self, ref: BoundaryEdge | tuple[int, str]) -> RationalCurve:
        patch, edge = (ref.patch, ref.edge) if isinstance(ref, BoundaryEdge) else ref
        return self.patches[patch].edge_curve(edge)

    # ---- integral quantities ------------------------------------------

    def patch_area(self, i: int, n_gauss: int = 6) -> float:
        s = self.patches[i].surface
        uq, uw = element_quadrature(s.kv_u, n_gauss)
        vq, vw = element_quadrature(s.kv_v, n_gauss)
        uu, vv = np.meshgrid(uq, vq, indexing="ij")
        _, jacs = s.eval_many(uu.ravel(), vv.ravel())
        dets = jacs[:, 0, 0] * jacs[:, 1, 1] - jacs[:, 0, 1] * jacs[:, 1, 0]
        w = np.outer(uw, vw).ravel()
        return float(np.dot(w, dets))

    def area_by_material(self, n_gauss: int = 6) -> dict[str, float]:
        out: dict[str, float] = {}
        for i, p in enumerate(self.patches):
            out[p.material] = out.get(p.material, 0.0) + self.patch_area(i, n_gauss)
        return out

    def slot_areas(self, n_gauss: int = 6) -> dict[int, float]:
        out: dict[int, float] = {}
        for i, p in enumerate(self.patches):
            if p.material == "copper" and p.slot is not None:
                out[p.slot] = out.get(p.slot, 0.0) + self.patch_area(i, n_gauss)
        return dict(sorted(out.items()))

    def control_point_count(self) -> int:
        """Distinct geometry control points (for reporting only)."""
        seen = set()
        for p in self.patches:
            pts = p.surface.ctrl.reshape(-1, 2)
            for x, y in np.round(pts / 1e-9).astype(np.int64):
                seen.add((int(x), int(y)))
        return len(seen)

    # ---- consistency checks -------------------------------------------

    def validate(self, n_gauss: int = 4, tol: float = 1e-9) -> dict:
        """Check Jacobian positivity and interface conformity.

        Raises GeometryError on failure; returns summary statistics.
        """
        min_det = np.inf
        for i, p in enumerate(self.patches):
            s = p.surface
            uq, _ = element_quadrature(s.kv_u, n_gauss)
            vq, _ = element_quadrature(s.kv_v, n_gauss)
            uu, vv = np.meshgrid(uq, vq, indexing="ij")
            _, jacs = s.eval_many(uu.ravel(), vv.ravel())
            dets = jacs[:, 0, 0] * jacs[:, 1, 1] - jacs[:, 0, 1] * jacs[:, 1, 0]
            worst = float(dets.min())
            if worst <= 0.0:
                raise GeometryError(
                    f"patch {p.name!r} has non-positive Jacobian (min {worst:.3e})")
            min_det = min(min_det, worst)

        ts = np.linspace(0.0, 1.0, 7)
        sector = self.constants.sector_angle
        c, s_ = np.cos(sector), np.sin(sector)
        rot = np.array([[c, -s_], [s_, c]])
        max_gap = 0.0
        for itf in self.interfaces:
            ca = self.patches[itf.a].edge_curve(itf.edge_a)
            cb = self.patches[itf.b].edge_curve(itf.edge_b)
            pa, _ = ca.eval_many(ts)
            pb, _ = cb.eval_many(ts)
            if itf.sign < 0:
                pa = pa @ rot.T
            gap = float(np.max(np.hypot(*(pa - pb).T)))
            if gap > tol:
                na, nb = self.patches[itf.a].name, self.patches[itf.b].name
                raise GeometryError(
                    f"interface {na}/{itf.edge_a} vs {nb}/{itf.edge_b} "
                    f"mismatch {gap:.3e}")
            max_gap = max(max_gap, gap)

        r_c = self.constants.coupling_radius
        for group in (self.coupling_rotor, self.coupling_stator):
            for ref in group:
                pts, _ = self.edge_curve(ref).eval_many(ts)
                err = float(np.max(np.abs(np.hypot(pts[:, 0], pts[:, 1]) - r_c)))
                if err > tol:
                    raise GeometryError(
                        f"coupling edge {self.patches[ref.patch].name}/{ref.edge} "
                        f"off the coupling circle by {err:.3e}")

        return {"min_jacobian": min_det, "max_interface_gap": max_gap,
                "n_patches": len(self.patches)}

    def rotated(self, dalpha: float, region: str = "rotor") -> "MachinePatchwork":
        """Copy with the given region rigidly rotated (visualization aid)."""
        c, s_ = np.cos(dalpha), np.sin(dalpha)
        rot = np.array([[c, -s_], [s_, c]])
        patches = []
        for p in self.patches:
            if p.region == region:
                surf = SplineSurface(p.surface.kv_u, p.surface.kv_v,
                                     p.surface.ctrl @ rot.T, p.surface.weights)
                p = Patch(p.name, surf, p.material, p.region,
                          p.elements_hint, p.slot, p.phase)
            patches.append(p)
        out = MachinePatchwork(
            self.constants, self.design, patches, self.interfaces,
            self.dirichlet, self.coupling_rotor, self.coupling_stator,
            self.rotor_surface, self.stator_bore,
            self.magnet_axis_angle + (dalpha if region == "rotor" else 0.0))
        return out

    def to_text(self) -> str:
        """Structured plain-text dump of patches and connectivity."""
        lines = [f"patches {len(self.patches)}"]
        for p in self.patches:
            nu, nv = p.surface.weights.shape
            lines.append(f"patch {p.name} material={p.material} region={p.region} "
                         f"ctrl={nu}x{nv}")
            for i in range(nu):
                for j in range(nv):
                    x, y = p.surface.ctrl[i, j]
                    w = p.surface.weights[i, j]
                    lines.append(f"  cp {i} {j} {x:.12e} {y:.12e} {w:.12e}")
        lines.append(f"interfaces {len(self.interfaces)}")
        for itf in self.interfaces:
            lines.append(f"  {self.patches[itf.a].name}:{itf.edge_a} "
                         f"{self.patches[itf.b].name}:{itf.edge_b} sign={itf.sign:+.0f}")
        lines.append(f"dirichlet {len(self.dirichlet)}")
        for ref in self.dirichlet:
            lines.append(f"  {self.patches[ref.patch].name}:{ref.edge}")
        for label, group in (("coupling_rotor", self.coupling_rotor),
                             ("coupling_stator", self.coupling_stator)):
            lines.append(f"{label} {len(group)}")
            for ref in group:
                lines.append(f"  {self.patches[ref.patch].name}:{ref.edge}")
        return "\n".join(lines) + "\n"
