"""Solution spaces and degree-of-freedom bookkeeping.

The geometry patches stay coarse rational Bezier surfaces; each patch gets
its own h-refined open-knot spline space for the magnetic vector
potential.  Degrees of freedom on shared edges are identified through the
interface lists recorded during geometry construction (never by matching
coordinates); the antiperiodic pairs at the sector cut are identified with
sign -1, and boundary edges on the shaft and the stator outer radius are
eliminated.

Reference data (basis tables, element connectivity, quadrature weights)
depends only on the refinement level, so it is computed once and reused
across design changes; the design-dependent part (Jacobians at quadrature
points) lives in `GeometryTables`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import MachinePatchwork
from .splines import (KnotVector, element_quadrature, open_uniform_knots,
                      tabulate)


def edge_local_indices(n_u: int, n_v: int, edge: str) -> np.ndarray:
    """Flat local indices (iu * n_v + iv) of the basis functions whose
    trace on the given edge is nonzero, ordered along the edge."""
    if edge == "inner":
        return np.arange(n_v)
    if edge == "outer":
        return (n_u - 1) * n_v + np.arange(n_v)
    if edge == "start":
        return np.arange(n_u) * n_v
    if edge == "end":
        return np.arange(n_u) * n_v + (n_v - 1)
    raise ValueError(f"unknown edge {edge!r}")


class _SignedUnionFind:
    """Union-find over dofs with a relative sign to the representative."""

    def __init__(self, n: int):
        self.parent = np.arange(n)
        self.sign = np.ones(n)

    def find(self, i: int) -> tuple[int, float]:
        path = []
        while self.parent[i] != i:
            path.append(i)
            i = self.parent[i]
        root = i
        t = 1.0
        for j in reversed(path):   # closest to the root first
            t = self.sign[j] * t
            self.parent[j] = root
            self.sign[j] = t
        return root, (t if path else 1.0)

    def union(self, i: int, j: int, rel: float):
        """Enforce value_i = rel * value_j."""
        ri, si = self.find(i)   # value_i = si * value_ri
        rj, sj = self.find(j)
        if ri == rj:
            if si != rel * sj:
                raise ValueError("inconsistent sign constraint in dof identification")
            return
        # value_ri = value_i / si = rel * sj / si * value_rj
        self.parent[ri] = rj
        self.sign[ri] = rel * sj / si


@dataclass
class PatchTables:
    """Reference (design-independent) data of one patch space."""

    kv_u: KnotVector
    kv_v: KnotVector
    n_u: int
    n_v: int
    conn: np.ndarray       # (E, nloc) flat local dof per element
    basis: np.ndarray      # (E, Q, nloc) values at quadrature points
    dbasis_du: np.ndarray  # (E, Q, nloc)
    dbasis_dv: np.ndarray
    qweights: np.ndarray   # (E, Q) reference quadrature weights
    qparams: np.ndarray    # (E, Q, 2) parameter coordinates

    @property
    def n_local(self) -> int:
        return self.n_u * self.n_v


@dataclass
class EdgeTrace:
    """Quadrature data of one coupling edge for the mortar integrals."""

    gids: np.ndarray       # (n_edge,) global dof ids (-1 if eliminated)
    gsigns: np.ndarray     # (n_edge,)
    theta: np.ndarray      # (nq,) angle at quadrature points
    weight: np.ndarray     # (nq,) quadrature weight including dtheta/dt
    basis: np.ndarray      # (nq, n_edge) trace basis values


def _direction_tables(kv: KnotVector, n_gauss: int):
    qs, ws = element_quadrature(kv, n_gauss)
    first, ders = tabulate(kv, qs, 1)
    n_el = len(kv.breakpoints) - 1
    vals = ders[:, 0, :].reshape(n_el, n_gauss, kv.degree + 1)
    grads = ders[:, 1, :].reshape(n_el, n_gauss, kv.degree + 1)
    # sanity: for open uniform knots, element e supports basis e .. e+p
    expect = np.repeat(np.arange(n_el), n_gauss)
    if not np.array_equal(first, expect):
        raise AssertionError("unexpected span layout for open uniform knots")
    return (qs.reshape(n_el, n_gauss), ws.reshape(n_el, n_gauss), vals, grads)


def _patch_tables(hint: tuple[int, int], refine: int, degree: int,
                  n_gauss: int) -> PatchTables:
    el_u, el_v = hint[0] * refine, hint[1] * refine
    kv_u = KnotVector(degree, open_uniform_knots(degree, el_u))
    kv_v = KnotVector(degree, open_uniform_knots(degree, el_v))
    n_u, n_v = kv_u.n_basis, kv_v.n_basis
    qu, wu, nu, du = _direction_tables(kv_u, n_gauss)
    qv, wv, nv, dv = _direction_tables(kv_v, n_gauss)

    p1 = degree + 1
    basis = np.einsum("aqi,brj->abqrij", nu, nv)
    dbu = np.einsum("aqi,brj->abqrij", du, nv)
    dbv = np.einsum("aqi,brj->abqrij", nu, dv)
    E, Q = el_u * el_v, n_gauss * n_gauss
    basis = basis.reshape(el_u, el_v, Q, p1 * p1).reshape(E, Q, p1 * p1)
    dbu = dbu.reshape(E, Q, p1 * p1)
    dbv = dbv.reshape(E, Q, p1 * p1)
    qw = np.einsum("aq,br->abqr", wu, wv).reshape(E, Q)
    uu = np.broadcast_to(qu[:, None, :, None], (el_u, el_v, n_gauss, n_gauss))
    vv = np.broadcast_to(qv[None, :, None, :], (el_u, el_v, n_gauss, n_gauss))
    qparams = np.stack([uu.reshape(E, Q), vv.reshape(E, Q)], axis=-1)

    # element (a, b) supports the basis grid [a, a+p] x [b, b+p]
    iu = np.arange(el_u)[:, None, None, None] + np.arange(p1)[None, None, :, None]
    iv = np.arange(el_v)[None, :, None, None] + np.arange(p1)[None, None, None, :]
    conn = np.broadcast_to(iu * n_v + iv, (el_u, el_v, p1, p1))
    conn = conn.reshape(E, p1 * p1).copy()
    return PatchTables(kv_u, kv_v, n_u, n_v, conn, basis, dbu, dbv, qw, qparams)


@dataclass
class GeometryTables:
    """Design-dependent quadrature data: one entry per patch."""

    points: list[np.ndarray]    # (E, Q, 2) physical positions
    jxw: list[np.ndarray]       # (E, Q) det(J) * quadrature weight
    grad_phys: list[np.ndarray]  # (E, Q, nloc, 2) physical basis gradients
    jac: list[np.ndarray]       # (E, Q, 2, 2)


class Discretization:
    """Glued multipatch spline space on a machine patchwork."""

    def __init__(self, patchwork: MachinePatchwork, refine: int = 2,
                 degree: int = 2, n_gauss: int = 3, mortar_gauss: int = 10):
        self.patchwork = patchwork
        self.refine = refine
        self.degree = degree
        self.n_gauss = n_gauss
        self.mortar_gauss = mortar_gauss

        self.tables: list[PatchTables] = [
            _patch_tables(p.elements_hint, refine, degree, n_gauss)
            for p in patchwork.patches]

        self._identify_dofs()
        self._build_traces()

    # ---- dof identification -------------------------------------------

    def _identify_dofs(self):
        pw = self.patchwork
        offsets = np.cumsum([0] + [t.n_local for t in self.tables])
        total = int(offsets[-1])
        self._offsets = offsets
        uf = _SignedUnionFind(total)

        for itf in pw.interfaces:
            ta, tb = self.tables[itf.a], self.tables[itf.b]
            la = edge_local_indices(ta.n_u, ta.n_v, itf.edge_a) + offsets[itf.a]
            lb = edge_local_indices(tb.n_u, tb.n_v, itf.edge_b) + offsets[itf.b]
            if la.size != lb.size:
                raise ValueError(
                    f"non-matching edge discretizations: {pw.patches[itf.a].name}"
                    f"/{itf.edge_a} vs {pw.patches[itf.b].name}/{itf.edge_b}")
            for i, j in zip(la, lb):
                uf.union(int(i), int(j), itf.sign)

        fixed = np.zeros(total, dtype=bool)
        for ref in pw.dirichlet:
            t = self.tables[ref.patch]
            idx = edge_local_indices(t.n_u, t.n_v, ref.edge) + offsets[ref.patch]
            fixed[idx] = True

        roots = np.empty(total, dtype=int)
        signs = np.empty(total)
        for i in range(total):
            roots[i], signs[i] = uf.find(i)
        root_fixed = np.zeros(total, dtype=bool)
        np.logical_or.at(root_fixed, roots, fixed)

        gid_of_root = -np.ones(total, dtype=int)
        free_roots = np.unique(roots[~root_fixed[roots]])
        gid_of_root[free_roots] = np.arange(free_roots.size)
        self.n_dofs = int(free_roots.size)

        gids = np.where(root_fixed[roots], -1, gid_of_root[roots])
        self.gid = [gids[offsets[i]:offsets[i + 1]] for i in range(len(pw.patches))]
        self.gsign = [signs[offsets[i]:offsets[i + 1]] for i in range(len(pw.patches))]

        region = np.zeros(self.n_dofs, dtype=np.int8)
        for i, p in enumerate(pw.patches):
            g = self.gid[i]
            region[g[g >= 0]] = 0 if p.region == "rotor" else 1
        self.dof_region = region

    @property
    def n_rotor_dofs(self) -> int:
        return int(np.sum(self.dof_region == 0))

    # ---- mortar traces ------------------------------------------------

    def _edge_trace(self, ref) -> EdgeTrace:
        t = self.tables[ref.patch]
        patch = self.patchwork.patches[ref.patch]
        curve = patch.edge_curve(ref.edge)
        kv = t.kv_v if ref.edge in ("inner", "outer") else t.kv_u
        local = edge_local_indices(t.n_u, t.n_v, ref.edge)
        gids = self.gid[ref.patch][local]
        gsigns = self.gsign[ref.patch][local]

        qs, ws = element_quadrature(kv, self.mortar_gauss)
        first, ders = tabulate(kv, qs, 0)
        p1 = kv.degree + 1
        basis = np.zeros((qs.size, kv.n_basis))
        cols = first[:, None] + np.arange(p1)[None, :]
        np.put_along_axis(basis, cols, ders[:, 0, :], axis=1)

        pts, tans = curve.eval_many(qs, n_ders=1)
        r2 = pts[:, 0] ** 2 + pts[:, 1] ** 2
        dtheta = (pts[:, 0] * tans[:, 1] - pts[:, 1] * tans[:, 0]) / r2
        theta = np.arctan2(pts[:, 1], pts[:, 0])
        return EdgeTrace(gids, gsigns, theta, ws * dtheta, basis)

    def _build_traces(self):
        self.trace_rotor = [self._edge_trace(r) for r in self.patchwork.coupling_rotor]
        self.trace_stator = [self._edge_trace(r) for r in self.patchwork.coupling_stator]

    # ---- design-dependent tables --------------------------------------

    def geometry_tables(self, patchwork: MachinePatchwork | None = None) -> GeometryTables:
        """Jacobian data at the quadrature points.

        `patchwork` may be a rebuilt geometry of identical topology (same
        constants and refinement); defaults to the one used to build the
        discretization.
        """
        pw = patchwork or self.patchwork
        if len(pw.patches) != len(self.patchwork.patches):
            raise ValueError("patchwork does not match discretization topology")
        points, jxw, grad_phys, jacs = [], [], [], []
        for patch, t in zip(pw.patches, self.tables):
            E, Q = t.qweights.shape
            us = t.qparams[..., 0].ravel()
            vs = t.qparams[..., 1].ravel()
            pts, jac = patch.surface.eval_many(us, vs)
            pts = pts.reshape(E, Q, 2)
            jac = jac.reshape(E, Q, 2, 2)
            det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
            if np.any(det <= 0):
                raise ValueError(f"non-positive Jacobian in patch {patch.name}")
            inv = np.empty_like(jac)
            inv[..., 0, 0] = jac[..., 1, 1]
            inv[..., 0, 1] = -jac[..., 0, 1]
            inv[..., 1, 0] = -jac[..., 1, 0]
            inv[..., 1, 1] = jac[..., 0, 0]
            inv /= det[..., None, None]
            dref = np.stack([t.dbasis_du, t.dbasis_dv], axis=-1)  # (E,Q,nloc,2)
            # physical gradient: dN_x = dN_ref . J^{-1}
            gp = np.einsum("eqnd,eqdc->eqnc", dref, inv)
            points.append(pts)
            jxw.append(det * t.qweights)
            grad_phys.append(gp)
            jacs.append(jac)
        return GeometryTables(points, jxw, grad_phys, jacs)

    # ---- field evaluation ---------------------------------------------

    def local_coefficients(self, patch: int, u_free: np.ndarray) -> np.ndarray:
        """Gather the local control coefficients of one patch from the
        global free vector (Dirichlet entries are zero)."""
        g, s = self.gid[patch], self.gsign[patch]
        coeff = np.zeros(g.size)
        mask = g >= 0
        coeff[mask] = s[mask] * u_free[g[mask]]
        return coeff

    def evaluate(self, patch: int, us, vs, u_free: np.ndarray,
                 patchwork: MachinePatchwork | None = None):
        """Potential A and flux density B = (dA/dy, -dA/dx) on a parameter
        grid of one patch.  Returns (points, A, B) with grid shapes."""
        pw = patchwork or self.patchwork
        t = self.tables[patch]
        us = np.asarray(us, dtype=float).ravel()
        vs = np.asarray(vs, dtype=float).ravel()
        uu, vv = np.meshgrid(us, vs, indexing="ij")
        coeff = self.local_coefficients(patch, u_free).reshape(t.n_u, t.n_v)

        fu, du_ = tabulate(t.kv_u, uu.ravel(), 1)
        fv, dv_ = tabulate(t.kv_v, vv.ravel(), 1)
        p1 = self.degree + 1
        iu = fu[:, None] + np.arange(p1)[None, :]
        iv = fv[:, None] + np.arange(p1)[None, :]
        cl = coeff[iu[:, :, None], iv[:, None, :]]           # (n, p1, p1)
        a = np.einsum("nk,nl,nkl->n", du_[:, 0, :], dv_[:, 0, :], cl)
        da_du = np.einsum("nk,nl,nkl->n", du_[:, 1, :], dv_[:, 0, :], cl)
        da_dv = np.einsum("nk,nl,nkl->n", du_[:, 0, :], dv_[:, 1, :], cl)

        pts, jac = pw.patches[patch].surface.eval_many(uu.ravel(), vv.ravel())
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        # dA/dx = (dA/du * dy/dv - dA/dv * dy/du) / det, similarly for y
        da_dx = (da_du * jac[:, 1, 1] - da_dv * jac[:, 1, 0]) / det
        da_dy = (-da_du * jac[:, 0, 1] + da_dv * jac[:, 0, 0]) / det
        b = np.stack([da_dy, -da_dx], axis=-1)
        shape = uu.shape
        return (pts.reshape(*shape, 2), a.reshape(shape), b.reshape(*shape, 2))
