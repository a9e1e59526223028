"""Blocks of the coupled magnetostatic saddle-point system.

The z component A of the magnetic vector potential on the pole sector
satisfies the nonlinear Poisson problem

    -div( nu(|grad A|^2) grad A ) = J + magnet source,

discretized by Galerkin projection on the glued multipatch spline space.
Rotor and stator meshes are tied on the mid-gap circle by harmonic mortar
multipliers: the trace moments against cos(n theta) and sin(n theta) of
both sides must agree after rotating the rotor moments by the rotor angle
beta.  The coupled system reads

    [ K_rt(u)      0          -G_rt     ] [u_rt]   [b_rt]
    [    0      K_st(u)     G_st R_b    ] [u_st] = [b_st]
    [ -G_rt^T  R_b^T G_st^T     0       ] [lam ]   [ 0  ]

Rotor-side quantities are kept in rotor-local coordinates and the magnet
direction rotates with the rotor, so a beta sweep changes only the cheap
blocks R_b and b_st; every geometry-dependent block is reused.

Admissible circle harmonics are the odd multiples of the pole pair count:
antiperiodic fields carry no other angular content.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .discretization import Discretization
from .geometry import MachinePatchwork
from .materials import MAGNET, Material, default_materials

#: Rated stator current density [A/m^2].
RATED_CURRENT_DENSITY = 3.2e6
#: Default number of mortar harmonics per side.
DEFAULT_HARMONICS = 10


class AssemblyError(RuntimeError):
    """Raised when assembled entries are not finite."""


@dataclass(frozen=True)
class OperatingPoint:
    """Excitation of one solve.

    current_scale multiplies the rated current density, beta is the
    mechanical rotor angle [rad] and phi0 the electric phase offset [rad].
    """

    current_scale: float = 1.0
    beta: float = 0.0
    phi0: float = 0.0

    def __post_init__(self):
        if self.current_scale < 0:
            raise ValueError("current_scale must be non-negative")


def harmonic_set(pole_pairs: int, count: int) -> list[int]:
    """The first `count` admissible circle harmonics p, 3p, 5p, ..."""
    if count < 1:
        raise ValueError("empty harmonic set")
    return [pole_pairs * (2 * j + 1) for j in range(count)]


def rotation_matrix(beta: float, harmonics) -> tuple[np.ndarray, np.ndarray]:
    """Block rotation of harmonic (cos, sin) moment pairs and its
    derivative with respect to beta."""
    ns = np.asarray(list(harmonics), dtype=float)
    if ns.size == 0:
        raise ValueError("empty harmonic set")
    m = 2 * ns.size
    R = np.zeros((m, m))
    Rp = np.zeros((m, m))
    c, s = np.cos(ns * beta), np.sin(ns * beta)
    i = 2 * np.arange(ns.size)
    R[i, i] = c
    R[i, i + 1] = -s
    R[i + 1, i] = s
    R[i + 1, i + 1] = c
    Rp[i, i] = -ns * s
    Rp[i, i + 1] = -ns * c
    Rp[i + 1, i] = ns * c
    Rp[i + 1, i + 1] = -ns * s
    return R, Rp


@dataclass
class AssembledSystem:
    """All blocks of the coupled system at one operating point.

    The stiffness blocks are evaluated at the linearization state the
    caller passed to :meth:`Assembly.system`.
    """

    K_rt: sp.csr_matrix
    K_st: sp.csr_matrix
    G_rt: np.ndarray
    G_st: np.ndarray
    R_beta: np.ndarray
    R_beta_prime: np.ndarray
    b_rt: np.ndarray
    b_st: np.ndarray
    harmonics: list[int] = field(default_factory=list)

    @property
    def n_rotor(self) -> int:
        return self.K_rt.shape[0]

    @property
    def n_stator(self) -> int:
        return self.K_st.shape[0]

    def saddle_matrix(self) -> sp.csc_matrix:
        K = sp.block_diag([self.K_rt, self.K_st], format="csr")
        C = np.zeros((K.shape[0], 2 * len(self.harmonics)))
        C[: self.n_rotor] = -self.G_rt
        C[self.n_rotor:] = self.G_st @ self.R_beta
        Cs = sp.csr_matrix(C)
        return sp.bmat([[K, Cs], [Cs.T, None]], format="csc")

    def rhs(self) -> np.ndarray:
        return np.concatenate(
            [self.b_rt, self.b_st, np.zeros(2 * len(self.harmonics))])


class Assembly:
    """Assembles the system blocks on one discretization.

    The expensive, design-dependent data (physical gradients, element
    volumes, magnet load, per-phase current loads, mortar matrices) is
    precomputed once; :meth:`assemble_stiffness` is the only per-Newton
    operation and :meth:`assemble_rhs` the only per-operating-point one.

    `patchwork` defaults to the one the discretization was built on; pass
    a rebuilt geometry of identical topology to assemble on a modified
    design without re-tabulating reference data.  The magnet remanence
    direction is `patchwork.magnet_axis_angle` plus the magnet material's
    own angle (an offset for modelling skew).
    """

    def __init__(self, disc: Discretization,
                 materials: dict[str, Material] | None = None,
                 patchwork: MachinePatchwork | None = None,
                 n_harmonics: int = DEFAULT_HARMONICS,
                 current_density: float = RATED_CURRENT_DENSITY):
        self.disc = disc
        self.patchwork = patchwork if patchwork is not None else disc.patchwork
        self.materials = materials if materials is not None else default_materials()
        self.constants = self.patchwork.constants
        self.current_density = current_density
        self.harmonics = harmonic_set(self.constants.pole_pairs, n_harmonics)
        self.tables = disc.geometry_tables(self.patchwork)

        region = disc.dof_region
        if np.any(np.diff(region) < 0):
            raise AssemblyError("dof numbering does not order rotor before stator")
        self.n_rotor = disc.n_rotor_dofs
        self.n_stator = disc.n_dofs - self.n_rotor

        self._mats = [self.materials[p.material] for p in self.patchwork.patches]
        self._prepare_pattern()
        self._prepare_loads()
        self.G_rt, self.G_st, _ = self.assemble_coupling(n_harmonics)

    # ---- precomputation -----------------------------------------------

    def _prepare_pattern(self):
        """Global element connectivity and the static sparsity pattern."""
        disc = self.disc
        self._econn, self._esign = [], []
        rows, cols, keep = [], [], []
        for i, t in enumerate(disc.tables):
            g = disc.gid[i][t.conn]                     # (E, nloc)
            s = disc.gsign[i][t.conn]
            self._econn.append(g)
            self._esign.append(s)
            r = np.broadcast_to(g[:, :, None], (*g.shape, g.shape[1]))
            c = np.broadcast_to(g[:, None, :], r.shape)
            mask = (r >= 0) & (c >= 0)
            rows.append(r[mask])
            cols.append(c[mask])
            keep.append(mask)
        self._Krows = np.concatenate(rows)
        self._Kcols = np.concatenate(cols)
        self._Kmask = keep

    def _prepare_loads(self):
        """Magnet load vector and the three per-phase current loads."""
        disc, pw = self.disc, self.patchwork
        n = disc.n_dofs
        self._b_magnet = np.zeros(n)
        self._b_phase = np.zeros((n, 3))
        for i, patch in enumerate(pw.patches):
            t = disc.tables[i]
            jxw = self.tables.jxw[i]
            g, s = self._econn[i], self._esign[i]
            valid = g >= 0
            mat = self._mats[i]
            if patch.material == MAGNET:
                br = mat.rotated(pw.magnet_axis_angle).remanence_perp()
                nu_m = float(mat.nu(0.0))
                contrib = np.einsum("eq,eqnc,c->en",
                                    jxw * nu_m, self.tables.grad_phys[i], br)
                np.add.at(self._b_magnet, g[valid], (contrib * s)[valid])
            if patch.phase is not None:
                k, wind = patch.phase
                contrib = wind * np.einsum("eq,eqn->en", jxw, t.basis)
                np.add.at(self._b_phase[:, k], g[valid], (contrib * s)[valid])

    def element_coefficients(self, patch: int, u: np.ndarray) -> np.ndarray:
        """Signed local coefficients per element of one patch, zeros at
        constrained entries; shape (n_elements, n_local)."""
        g, s = self._econn[patch], self._esign[patch]
        return np.where(g >= 0, s * u[np.clip(g, 0, None)], 0.0)

    def scatter_elements(self, patch: int, values: np.ndarray) -> np.ndarray:
        """Accumulate per-element local values (n_elements, n_local) onto
        the free dof vector, applying the local orientation signs."""
        g, s = self._econn[patch], self._esign[patch]
        out = np.zeros(self.disc.n_dofs)
        valid = g >= 0
        np.add.at(out, g[valid], (values * s)[valid])
        return out

    # ---- stiffness -----------------------------------------------------

    def assemble_stiffness(self, u: np.ndarray) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """Stiffness K(u) and the extra Newton term D(u), both on the full
        free dof set, so that the residual Jacobian is K + D.

        D_ij = 2 integral of dnu/dB^2 (grad A . grad N_i)(grad A . grad N_j).
        """
        disc = self.disc
        k_parts, d_parts = [], []
        for i, t in enumerate(disc.tables):
            gp = self.tables.grad_phys[i]
            jxw = self.tables.jxw[i]
            g, s = self._econn[i], self._esign[i]
            coeff = np.where(g >= 0, s * u[np.clip(g, 0, None)], 0.0)
            ga = np.einsum("eqnc,en->eqc", gp, coeff)
            b2 = np.sum(ga * ga, axis=-1)
            mat = self._mats[i]
            nu = mat.nu(b2)
            Ke = np.einsum("eq,eqnc,eqmc->enm", jxw * nu, gp, gp)
            if mat.nonlinear:
                gn = np.einsum("eqnc,eqc->eqn", gp, ga)
                De = np.einsum("eq,eqn,eqm->enm",
                               2.0 * jxw * mat.dnu_dB2(b2), gn, gn)
            else:
                De = np.zeros_like(Ke)
            if not np.all(np.isfinite(Ke)) or not np.all(np.isfinite(De)):
                bad = np.argwhere(~np.isfinite(Ke).all(axis=(1, 2)))
                name = self.patchwork.patches[i].name
                raise AssemblyError(
                    f"non-finite stiffness entries in patch {name}, "
                    f"element {int(bad[0, 0]) if bad.size else '?'}")
            souter = s[:, :, None] * s[:, None, :]
            k_parts.append((Ke * souter)[self._Kmask[i]])
            d_parts.append((De * souter)[self._Kmask[i]])
        n = disc.n_dofs
        ij = (self._Krows, self._Kcols)
        K = sp.coo_matrix((np.concatenate(k_parts), ij), shape=(n, n)).tocsr()
        D = sp.coo_matrix((np.concatenate(d_parts), ij), shape=(n, n)).tocsr()
        return K, D

    # ---- right-hand sides ---------------------------------------------

    def phase_current_densities(self, op: OperatingPoint,
                                kR: float = 1.0) -> np.ndarray:
        """Signed densities of the three phases at this operating point."""
        electric = self.constants.pole_pairs * op.beta + op.phi0
        k = np.arange(3)
        return (self.current_density * op.current_scale * kR
                * np.sin(electric + 2.0 * np.pi * k / 3.0))

    def assemble_rhs(self, op: OperatingPoint,
                     kR: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """Magnet load (rotor block) and current load (stator block)."""
        dens = self.phase_current_densities(op, kR)
        b_full = self._b_phase @ dens
        return self._b_magnet[: self.n_rotor].copy(), b_full[self.n_rotor:]

    def assemble_rhs_dphi0(self, op: OperatingPoint,
                           kR: float = 1.0) -> np.ndarray:
        """d/d(phi0) of the assembled load on the full free dof set (the
        magnet load does not depend on the phase offset)."""
        electric = self.constants.pole_pairs * op.beta + op.phi0
        k = np.arange(3)
        rates = (self.current_density * op.current_scale * kR
                 * np.cos(electric + 2.0 * np.pi * k / 3.0))
        return self._b_phase @ rates

    # ---- mortar coupling ----------------------------------------------

    def _coupling_full(self, traces, ns) -> np.ndarray:
        G = np.zeros((self.disc.n_dofs, 2 * len(ns)))
        r_c = self.constants.coupling_radius
        ns = np.asarray(ns, dtype=float)
        for tr in traces:
            wc = tr.weight * r_c
            arg = np.outer(tr.theta, ns)
            cols = np.empty((tr.basis.shape[1], 2 * ns.size))
            cols[:, 0::2] = tr.basis.T @ (wc[:, None] * np.cos(arg))
            cols[:, 1::2] = tr.basis.T @ (wc[:, None] * np.sin(arg))
            valid = tr.gids >= 0
            np.add.at(G, tr.gids[valid], tr.gsigns[valid, None] * cols[valid])
        return G

    def assemble_coupling(self, n_harmonics: int | None = None):
        """Mortar moment matrices of both sides: column pairs hold the
        cos(n theta) and sin(n theta) arc moments of each trace basis."""
        ns = (self.harmonics if n_harmonics is None
              else harmonic_set(self.constants.pole_pairs, n_harmonics))
        G_rt = self._coupling_full(self.disc.trace_rotor, ns)[: self.n_rotor]
        G_st = self._coupling_full(self.disc.trace_stator, ns)[self.n_rotor:]
        return G_rt, G_st, list(ns)

    # ---- convenience ---------------------------------------------------

    def load_vector(self, fn) -> np.ndarray:
        """Assemble the weighted load integral of `fn(points)` against the
        basis (useful for manufactured sources)."""
        b = np.zeros(self.disc.n_dofs)
        for i, t in enumerate(self.disc.tables):
            vals = fn(self.tables.points[i])
            contrib = np.einsum("eq,eqn->en", self.tables.jxw[i] * vals, t.basis)
            g, s = self._econn[i], self._esign[i]
            valid = g >= 0
            np.add.at(b, g[valid], (contrib * s)[valid])
        return b

    def system(self, op: OperatingPoint, kR: float = 1.0,
               u: np.ndarray | None = None) -> AssembledSystem:
        """All blocks at one operating point, stiffness linearized at `u`
        (zero state by default)."""
        if u is None:
            u = np.zeros(self.disc.n_dofs)
        K, _ = self.assemble_stiffness(u)
        n_rt = self.n_rotor
        R, Rp = rotation_matrix(op.beta, self.harmonics)
        b_rt, b_st = self.assemble_rhs(op, kR)
        return AssembledSystem(
            K_rt=K[:n_rt, :n_rt].tocsr(), K_st=K[n_rt:, n_rt:].tocsr(),
            G_rt=self.G_rt, G_st=self.G_st, R_beta=R, R_beta_prime=Rp,
            b_rt=b_rt, b_st=b_st, harmonics=list(self.harmonics))
