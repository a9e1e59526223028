"""Adjoint sensitivities of torque, cost and the scalarized objective.

The torque derivative with respect to the 19 geometry variables uses one
adjoint solve per operating point plus the analytic shape derivative of
the assembled residual, obtained by the geometry Jacobian chain rule: the
rate of each patch map under a design variable (its velocity field) is
central-differenced at fixed spline parameters, everything downstream is
exact.  Differencing the maps rather than the control nets matters
because the rational weights of interior arcs move with several scalar
variables.

A second, fully independent route differences complete rebuilt
assemblies (`residual_fd`) and is kept as a cross-check oracle for the
analytic kernels.  The stack length L and radial scale kR bypass the PDE
through their power laws; phi0 only enters the load vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import Assembly, OperatingPoint, rotation_matrix
from .costs import CostModel, material_cost
from .geometry import DesignVector, build_geometry
from .geometry.builder import side_patches, variable_side
from .geometry.design import N_VARIABLES, VARIABLE_NAMES, default_bounds
from .materials import MAGNET
from .pipeline import (WATTS_PER_KILOWATT, BuiltDesign, Evaluation,
                       MachineModel)
from .solver import SolutionState
from .splines import element_quadrature, tabulate

L_INDEX, PHI0_INDEX, KR_INDEX = 0, 1, 2

#: Variables that act through the patch geometry (all but L, phi0, kR).
GEOMETRY_VARIABLES = tuple(range(3, N_VARIABLES))

#: Step for differencing the geometry maps and area functionals.  The
#: builder output is smooth on this scale; truncation and roundoff both
#: land around 1e-8 relative, far below the 1e-6 agreement the kernels
#: are held to.
DEFAULT_STEP = 1e-7


def normalize_variables(variables=None) -> tuple[int, ...]:
    """Sorted variable positions from indices, names or None (= all)."""
    if variables is None:
        return tuple(range(N_VARIABLES))
    out = []
    for v in variables:
        if isinstance(v, str):
            if v not in VARIABLE_NAMES:
                raise ValueError(f"unknown design variable {v!r}")
            out.append(VARIABLE_NAMES.index(v))
        else:
            i = int(v)
            if not 0 <= i < N_VARIABLES:
                raise ValueError(f"design variable index {i} out of range")
            out.append(i)
    if len(set(out)) != len(out):
        raise ValueError("duplicate design variables requested")
    return tuple(sorted(out))


# ---- geometry rates ----------------------------------------------------


@dataclass
class GeometryRates:
    """Per-variable rates of one built design's geometry.

    djac[i][v] is d(map Jacobian)/d(variable) on patch i at the assembly
    quadrature points, shape (n_vars, E, Q, 2, 2).  d_mass and d_loss_w
    are the matching rates of the material cost and the total Joule loss
    (pure area functionals, differenced on the same rebuilt patchworks).
    """

    indices: tuple[int, ...]
    djac: list[np.ndarray]
    d_mass: np.ndarray
    d_loss_w: np.ndarray
    step: float


class _JacobianTable:
    """Pretabulated basis data for repeated map-Jacobian evaluation.

    All perturbed builds of a patch share knot vectors and evaluation
    parameters, so the per-point basis tabulation (the expensive part of
    surface evaluation) is done once and only the control/weight gather
    and contraction run per perturbed surface."""

    def __init__(self, surface, us, vs):
        fu, self.du = tabulate(surface.kv_u, us, 1)
        fv, self.dv = tabulate(surface.kv_v, vs, 1)
        self.iu = fu[:, None] + np.arange(surface.kv_u.degree + 1)[None, :]
        self.iv = fv[:, None] + np.arange(surface.kv_v.degree + 1)[None, :]

    def jacobians(self, surface) -> np.ndarray:
        H = surface.homogeneous()
        Hl = H[self.iu[:, :, None], self.iv[:, None, :]]
        S = np.einsum("nka,nlb,nabc->nklc", self.du, self.dv, Hl)
        w = S[:, 0, 0, 2]
        pts = S[:, 0, 0, :2] / w[:, None]
        dxu = (S[:, 1, 0, :2] - pts * S[:, 1, 0, 2:3]) / w[:, None]
        dxv = (S[:, 0, 1, :2] - pts * S[:, 0, 1, 2:3]) / w[:, None]
        return np.stack([dxu, dxv], axis=-1)


def _patch_jacobians(pw, disc, tabs=None) -> list[np.ndarray]:
    out = []
    for i, t in enumerate(disc.tables):
        E, Q = t.qweights.shape
        if tabs is None:
            _, jac = pw.patches[i].surface.eval_many(
                t.qparams[..., 0].ravel(), t.qparams[..., 1].ravel())
        else:
            jac = tabs[i].jacobians(pw.patches[i].surface)
        out.append(jac.reshape(E, Q, 2, 2))
    return out


def _variable_spans(pw) -> dict[str, tuple[int, int]]:
    """Global patch index range rebuilt by each side of the air gap."""
    n_rotor = len(side_patches(pw.design, pw.constants, "rotor"))
    return {"rotor": (0, n_rotor), "stator": (n_rotor, len(pw.patches))}


class _AreaTables:
    """Patch areas on the same composite Gauss rule `patch_area` uses,
    with the basis pretabulated once so perturbed builds integrate at
    gather-and-contract cost."""

    def __init__(self, pw, n_gauss: int = 6):
        self.tabs, self.wts = [], []
        for p in pw.patches:
            s = p.surface
            uq, uw = element_quadrature(s.kv_u, n_gauss)
            vq, vw = element_quadrature(s.kv_v, n_gauss)
            uu, vv = np.meshgrid(uq, vq, indexing="ij")
            self.tabs.append(_JacobianTable(s, uu.ravel(), vv.ravel()))
            self.wts.append(np.outer(uw, vw).ravel())

    def areas(self, patches, offset: int = 0) -> np.ndarray:
        out = np.empty(len(patches))
        for k, p in enumerate(patches):
            jac = self.tabs[offset + k].jacobians(p.surface)
            det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
            out[k] = np.dot(self.wts[offset + k], det)
        return out


def geometry_rates(built: BuiltDesign, indices=None,
                   step: float = DEFAULT_STEP) -> GeometryRates:
    """Central differences of the patch maps and the cost functionals
    over the requested geometry variables."""
    indices = GEOMETRY_VARIABLES if indices is None else tuple(indices)
    bad = [v for v in indices if v not in GEOMETRY_VARIABLES]
    if bad:
        raise ValueError(f"not geometry variables: {bad}")
    design, disc = built.design, built.disc
    constants = built.patchwork.constants
    cm = built.cost_model
    x = design.as_array()
    tabs = [_JacobianTable(built.patchwork.patches[i].surface,
                           t.qparams[..., 0].ravel(),
                           t.qparams[..., 1].ravel())
            for i, t in enumerate(disc.tables)]
    area_tabs = _AreaTables(built.patchwork)
    # both cost terms are linear in areas with constant coefficients:
    # M = sum kind_sens * A_kind, P_J proportional to the mean slot area
    sens = material_cost(cm.areas, cm.L, cm.kR, cm.materials)[1]
    mass_coef = np.array([sens[p.material]
                          for p in built.patchwork.patches])
    n_slot_groups = len(built.patchwork.slot_areas())
    loss_coef = np.array(
        [cm.P_J / (cm.A_slot * n_slot_groups)
         if p.material == "copper" and p.slot is not None else 0.0
         for p in built.patchwork.patches])

    spans = _variable_spans(built.patchwork)
    djac = [np.zeros((len(indices),) + t.qweights.shape + (2, 2))
            for t in disc.tables]
    d_mass = np.zeros(len(indices))
    d_loss = np.zeros(len(indices))
    for j, v in enumerate(indices):
        # only one side of the air gap reads any given variable; the other
        # side's maps are bitwise unchanged, so their rates are exactly zero
        side = variable_side(v)
        lo, hi = spans[side]
        sides = []
        for sgn in (1.0, -1.0):
            patches = side_patches(
                design.with_variable(v, x[v] + sgn * step), constants, side)
            jac = [tabs[lo + k].jacobians(p.surface)
                   for k, p in enumerate(patches)]
            sides.append((jac, area_tabs.areas(patches, lo)))
        (jac_p, area_p), (jac_m, area_m) = sides
        for k in range(hi - lo):
            E, Q = disc.tables[lo + k].qweights.shape
            djac[lo + k][j] = ((jac_p[k] - jac_m[k]) / (2.0 * step)
                               ).reshape(E, Q, 2, 2)
        darea = (area_p - area_m) / (2.0 * step)
        d_mass[j] = float(mass_coef[lo:hi] @ darea)
        d_loss[j] = float(loss_coef[lo:hi] @ darea)
    return GeometryRates(tuple(indices), djac, d_mass, d_loss, step)


# ---- analytic residual shape derivative --------------------------------


class ShapeKernels:
    """Contraction of geometry rates with the assembly kernels.

    For patch i and variable v, G[i][v] = (dJ/dv) J^-1 is the physical
    gradient of the geometry velocity field; its trace is the volume
    rate and its symmetric part the metric rate.  All residual terms
    (reluctivity stiffness, magnet load, phase current load) follow from
    G alone because the spline coefficients are held frozen.
    """

    def __init__(self, assembly: Assembly, rates: GeometryRates):
        self.assembly = assembly
        self.rates = rates
        self.G = []
        for i, dj in enumerate(rates.djac):
            jac = assembly.tables.jac[i]
            det = (jac[..., 0, 0] * jac[..., 1, 1]
                   - jac[..., 0, 1] * jac[..., 1, 0])
            inv = np.empty_like(jac)
            inv[..., 0, 0] = jac[..., 1, 1]
            inv[..., 0, 1] = -jac[..., 0, 1]
            inv[..., 1, 0] = -jac[..., 1, 0]
            inv[..., 1, 1] = jac[..., 0, 0]
            inv /= det[..., None, None]
            self.G.append(np.einsum("veqcd,eqdk->veqck", dj, inv))

    def _patch_fields(self, i: int, u: np.ndarray):
        a = self.assembly
        gp = a.tables.grad_phys[i]
        q = np.einsum("eqnc,en->eqc", gp, a.element_coefficients(i, u))
        return gp, q

    def residual_gamma(self, u: np.ndarray, gamma_u: np.ndarray,
                       op: OperatingPoint) -> np.ndarray:
        """gamma^T d(residual)/d(variable) at the frozen state, one entry
        per geometry variable of the rates."""
        a = self.assembly
        dens = a.phase_current_densities(op, 1.0)
        out = np.zeros(len(self.rates.indices))
        for i, patch in enumerate(a.patchwork.patches):
            G = self.G[i]
            jxw = a.tables.jxw[i]
            gp, q = self._patch_fields(i, u)
            gc = a.element_coefficients(i, gamma_u)
            gg = np.einsum("eqnc,en->eqc", gp, gc)
            div = G[..., 0, 0] + G[..., 1, 1]
            mat = a.materials[patch.material]
            b2 = np.sum(q * q, axis=-1)
            nu = mat.nu(b2)
            Sq = (np.einsum("veqck,eqk->veqc", G, q)
                  + np.einsum("veqkc,eqk->veqc", G, q))
            qgg = np.sum(q * gg, axis=-1)
            term = ((nu * div - mat.dnu_dB2(b2)
                     * np.einsum("eqc,veqc->veq", q, Sq)) * qgg
                    - nu * np.einsum("eqc,veqc->veq", gg, Sq))
            out += np.einsum("eq,veq->v", jxw, term)
            if patch.material == MAGNET:
                br = mat.rotated(a.patchwork.magnet_axis_angle).remanence_perp()
                nu_m = float(mat.nu(0.0))
                mterm = (div * np.einsum("eqc,c->eq", gg, br)
                         - np.einsum("eqc,veqck,k->veq", gg, G, br))
                out -= nu_m * np.einsum("eq,veq->v", jxw, mterm)
            if patch.phase is not None:
                k, wind = patch.phase
                ng = np.einsum("eqn,en->eq", a.disc.tables[i].basis, gc)
                out -= dens[k] * wind * np.einsum("eq,veq,eq->v", jxw, div, ng)
        return out

    def residual_gamma_batch(self, U: np.ndarray, Gam: np.ndarray,
                             ops) -> np.ndarray:
        """`residual_gamma` over stacked states: U and Gam are
        (n_states, n_dofs), ops the matching operating points.  Returns
        (n_states, n_vars).  Same contraction as the per-state route but
        with one pass over the patches, which is what keeps the cost of
        many variables close to the cost of one."""
        a = self.assembly
        dens = np.stack([a.phase_current_densities(op, 1.0) for op in ops])
        O = U.shape[0]
        out = np.zeros((O, len(self.rates.indices)))
        for i, patch in enumerate(a.patchwork.patches):
            G = self.G[i]
            jxw = a.tables.jxw[i]
            gp = a.tables.grad_phys[i]
            g, s = a._econn[i], a._esign[i]
            valid = g >= 0
            UC = np.where(valid, s * U[:, np.clip(g, 0, None)], 0.0)
            GC = np.where(valid, s * Gam[:, np.clip(g, 0, None)], 0.0)
            q = np.einsum("eqnc,oen->oeqc", gp, UC)
            gg = np.einsum("eqnc,oen->oeqc", gp, GC)
            div = G[..., 0, 0] + G[..., 1, 1]
            mat = a.materials[patch.material]
            b2 = np.sum(q * q, axis=-1)
            nu = mat.nu(b2)
            Sq = (np.einsum("veqck,oeqk->oveqc", G, q)
                  + np.einsum("veqkc,oeqk->oveqc", G, q))
            qgg = np.sum(q * gg, axis=-1)
            term = ((nu[:, None] * div[None]
                     - mat.dnu_dB2(b2)[:, None]
                     * np.einsum("oeqc,oveqc->oveq", q, Sq)) * qgg[:, None]
                    - nu[:, None] * np.einsum("oeqc,oveqc->oveq", gg, Sq))
            out += np.einsum("eq,oveq->ov", jxw, term)
            if patch.material == MAGNET:
                br = mat.rotated(a.patchwork.magnet_axis_angle).remanence_perp()
                nu_m = float(mat.nu(0.0))
                mterm = (div[None] * np.einsum("oeqc,c->oeq", gg, br)[:, None]
                         - np.einsum("oeqc,veqck,k->oveq", gg, G, br))
                out -= nu_m * np.einsum("eq,oveq->ov", jxw, mterm)
            if patch.phase is not None:
                k, wind = patch.phase
                ng = np.einsum("eqn,oen->oeq", a.disc.tables[i].basis, GC)
                out -= (dens[:, k, None] * wind
                        * np.einsum("eq,veq,oeq->ov", jxw, div, ng))
        return out

    def residual_vector(self, u: np.ndarray, op: OperatingPoint,
                        variable: int) -> np.ndarray:
        """Full d(residual)/d(variable) on the potential rows, for one
        geometry variable (constraint rows are design independent)."""
        a = self.assembly
        j = self.rates.indices.index(variable)
        dens = a.phase_current_densities(op, 1.0)
        out = np.zeros(a.disc.n_dofs)
        for i, patch in enumerate(a.patchwork.patches):
            G = self.G[i][j]
            jxw = a.tables.jxw[i]
            gp, q = self._patch_fields(i, u)
            div = G[..., 0, 0] + G[..., 1, 1]
            mat = a.materials[patch.material]
            b2 = np.sum(q * q, axis=-1)
            nu = mat.nu(b2)
            Sq = (np.einsum("eqck,eqk->eqc", G, q)
                  + np.einsum("eqkc,eqk->eqc", G, q))
            w1 = jxw * (nu * div
                        - mat.dnu_dB2(b2) * np.einsum("eqc,eqc->eq", q, Sq))
            contrib = (np.einsum("eq,eqnc,eqc->en", w1, gp, q)
                       - np.einsum("eq,eqnc,eqc->en", jxw * nu, gp, Sq))
            if patch.material == MAGNET:
                br = mat.rotated(a.patchwork.magnet_axis_angle).remanence_perp()
                nu_m = float(mat.nu(0.0))
                contrib -= nu_m * (
                    np.einsum("eq,eqnc,c->en", jxw * div, gp, br)
                    - np.einsum("eq,eqnc,eqck,k->en", jxw, gp, G, br))
            if patch.phase is not None:
                k, wind = patch.phase
                contrib -= (dens[k] * wind
                            * np.einsum("eq,eqn->en",
                                        jxw * div, a.disc.tables[i].basis))
            out += a.scatter_elements(i, contrib)
        return out


def residual_fd(built: BuiltDesign, state: SolutionState, variable: int,
                step: float = DEFAULT_STEP) -> np.ndarray:
    """Cross-check oracle: d(residual)/d(variable) on the potential rows
    by central differences of completely rebuilt assemblies, with the
    state frozen.  Independent of the analytic kernels."""
    if variable not in GEOMETRY_VARIABLES:
        raise ValueError(f"variable {variable} does not move the geometry")
    a = built.assembly
    design = built.design
    x = design.as_array()
    sides = []
    for sgn in (1.0, -1.0):
        pw = build_geometry(design.with_variable(variable, x[variable]
                                                 + sgn * step),
                            built.patchwork.constants)
        pert = Assembly(a.disc, materials=a.materials, patchwork=pw,
                        n_harmonics=len(a.harmonics),
                        current_density=a.current_density)
        K, _ = pert.assemble_stiffness(state.u)
        b_rt, b_st = pert.assemble_rhs(state.op, 1.0)
        # the perturbed coupling block participates on purpose: its
        # design independence is then a measured fact, not an assumption
        C = _constraint_block(pert, state.beta)
        r = K @ state.u + C @ state.lam - np.concatenate([b_rt, b_st])
        sides.append(r)
    return (sides[0] - sides[1]) / (2.0 * step)


# ---- adjoint solve -----------------------------------------------------


def _constraint_block(assembly: Assembly, beta: float) -> np.ndarray:
    R, _ = rotation_matrix(beta, assembly.harmonics)
    C = np.empty((assembly.disc.n_dofs, 2 * len(assembly.harmonics)))
    C[: assembly.n_rotor] = -assembly.G_rt
    C[assembly.n_rotor:] = assembly.G_st @ R
    return C


@dataclass
class AdjointState:
    """Adjoint of the full-machine torque at one converged state."""

    gamma: np.ndarray          # potential rows then multiplier rows
    n_dofs: int
    rhs_norm: float
    residual_norm: float       # || J^T gamma - rhs ||

    @property
    def gamma_u(self) -> np.ndarray:
        return self.gamma[: self.n_dofs]

    @property
    def gamma_lam(self) -> np.ndarray:
        return self.gamma[self.n_dofs:]


def torque_adjoint(assembly: Assembly, state: SolutionState,
                   L: float | None = None,
                   kR: float | None = None) -> AdjointState:
    """Solve the transposed tangent system for the torque output.

    The tangent saddle matrix (Newton Jacobian plus mortar blocks) is
    symmetric, so one factorization serves; the transpose residual is
    still evaluated explicitly as a certificate.
    """
    design = assembly.patchwork.design
    L = design.L if L is None else L
    kR = design.kR if kR is None else kR
    n = assembly.disc.n_dofs
    K, D = assembly.assemble_stiffness(state.u)
    _, Rp = rotation_matrix(state.beta, assembly.harmonics)
    C = _constraint_block(assembly, state.beta)
    Cs = sp.csr_matrix(C)
    J = sp.bmat([[K + D, Cs], [Cs.T, None]], format="csc")
    scale = 2.0 * assembly.constants.pole_pairs * L * kR**2
    du = np.zeros(n)
    du[assembly.n_rotor:] = -scale * (assembly.G_st @ (Rp @ state.lam))
    dlam = -scale * ((assembly.G_st @ Rp).T @ state.u_st)
    rhs = np.concatenate([du, dlam])
    gamma = splu(J).solve(rhs)
    res = float(np.linalg.norm(J.T @ gamma - rhs))
    return AdjointState(gamma, n, float(np.linalg.norm(rhs)), res)


# ---- objective chain ---------------------------------------------------


def _ripple_weights(torques_row: np.ndarray) -> np.ndarray:
    """d(population std)/d(T_b); the zero-ripple subgradient choice is 0."""
    t = np.asarray(torques_row, dtype=float)
    mean = np.mean(t)
    std = np.sqrt(np.mean((t - mean) ** 2))
    if std == 0.0:
        return np.zeros_like(t)
    return (t - mean) / (t.size * std)


@dataclass
class GradientReport:
    """Per-variable derivatives of the objective and its components.

    All arrays are ordered like `indices`; loss derivatives are in kW
    per design unit so the objective chain is the plain weighted sum.
    """

    indices: tuple[int, ...]
    names: tuple[str, ...]
    mass: np.ndarray
    mean_torque: np.ndarray
    ripple: np.ndarray
    loss: np.ndarray
    objective: np.ndarray
    fd_objective: np.ndarray | None = None

    #: Relative-error floor: entries below it are compared absolutely.
    ERROR_FLOOR = 1e-4

    @property
    def fd_error(self) -> np.ndarray:
        if self.fd_objective is None:
            raise ValueError("report carries no finite-difference column")
        return (np.abs(self.objective - self.fd_objective)
                / np.maximum(np.abs(self.fd_objective), self.ERROR_FLOOR))

    def rows(self):
        """(name, adjoint, fd, rel_error) per variable; fd entries are
        None when no check column is attached."""
        fd = self.fd_objective
        err = self.fd_error if fd is not None else None
        return [(self.names[j], float(self.objective[j]),
                 None if fd is None else float(fd[j]),
                 None if err is None else float(err[j]))
                for j in range(len(self.indices))]


def torque_derivatives(built: BuiltDesign, states, indices,
                       kernels: ShapeKernels | None = None,
                       rates_step: float = DEFAULT_STEP) -> np.ndarray:
    """d(torque)/d(variable) for a nested list of states; returns an
    array shaped like states plus a trailing variable axis."""
    a = built.assembly
    design = built.design
    geo = tuple(v for v in indices if v in GEOMETRY_VARIABLES)
    if geo and kernels is None:
        kernels = ShapeKernels(a, geometry_rates(built, geo, rates_step))
    pos = {v: j for j, v in enumerate(indices)}
    rows = len(states)
    cols = len(states[0])
    out = np.zeros((rows, cols, len(indices)))
    flat = [st for row in states for st in row]
    adjoints = [torque_adjoint(a, st) for st in flat]
    if geo:
        gvals = -kernels.residual_gamma_batch(
            np.stack([st.u for st in flat]),
            np.stack([ad.gamma_u for ad in adjoints]),
            [st.op for st in flat])
        gcols = [kernels.rates.indices.index(v) for v in geo]
    from .solver import torque as torque_of
    for li in range(rows):
        for bi in range(cols):
            k = li * cols + bi
            st, ad = flat[k], adjoints[k]
            T = torque_of(a, st)
            if geo:
                for v, gc in zip(geo, gcols):
                    out[li, bi, pos[v]] = gvals[k, gc]
            if L_INDEX in pos:
                out[li, bi, pos[L_INDEX]] = T / design.L
            if KR_INDEX in pos:
                out[li, bi, pos[KR_INDEX]] = 2.0 * T / design.kR
            if PHI0_INDEX in pos:
                out[li, bi, pos[PHI0_INDEX]] = (
                    ad.gamma_u @ a.assemble_rhs_dphi0(st.op, 1.0))
    return out


def gradient_report(model: MachineModel, design: DesignVector | None = None,
                    evaluation: Evaluation | None = None, variables=None,
                    fd_check: bool = False,
                    rates_step: float = DEFAULT_STEP) -> GradientReport:
    """Adjoint gradient of the scalarized objective and its components.

    Reuses the converged states of `evaluation` when given; `variables`
    restricts the computed columns (cost grows with the geometry subset,
    the per-point adjoint solves are shared by all of them).
    """
    if evaluation is None:
        if design is None:
            raise ValueError("need a design or an evaluation")
        evaluation = model.evaluate(design)
    built = evaluation.built
    if built is None:
        raise ValueError("evaluation does not carry its built design")
    sel = normalize_variables(variables)
    design = built.design
    geo = tuple(v for v in sel if v in GEOMETRY_VARIABLES)
    rates = geometry_rates(built, geo, rates_step) if geo else None
    kernels = ShapeKernels(built.assembly, rates) if rates else None
    dT = torque_derivatives(built, evaluation.states, sel, kernels)

    pos = {v: j for j, v in enumerate(sel)}
    n_sel = len(sel)
    cm = built.cost_model
    d_mass = np.zeros(n_sel)
    d_loss_w = np.zeros(n_sel)
    if rates:
        for v in geo:
            j = rates.indices.index(v)
            d_mass[pos[v]] = rates.d_mass[j]
            d_loss_w[pos[v]] = rates.d_loss_w[j]
    if L_INDEX in pos:
        d_mass[pos[L_INDEX]] = cm.dM_dL
        d_loss_w[pos[L_INDEX]] = cm.dPJ_dL
    if KR_INDEX in pos:
        d_mass[pos[KR_INDEX]] = cm.dM_dkR
        d_loss_w[pos[KR_INDEX]] = cm.dPJ_dkR

    full = model.grid.full_load_index
    d_mean = np.mean(dT[full], axis=0)
    d_ripple = np.zeros(n_sel)
    for li in range(len(model.grid.current_levels)):
        w = _ripple_weights(evaluation.torques[li])
        d_ripple += w @ dT[li]
    d_loss_kw = d_loss_w / WATTS_PER_KILOWATT
    w = model.weights
    d_obj = w.mass * d_mass + w.ripple * d_ripple + w.loss * d_loss_kw

    report = GradientReport(
        indices=sel, names=tuple(VARIABLE_NAMES[v] for v in sel),
        mass=d_mass, mean_torque=d_mean, ripple=d_ripple,
        loss=d_loss_kw, objective=d_obj)
    if fd_check:
        report.fd_objective = objective_fd(model, design, sel)
    return report


# ---- finite-difference verification ------------------------------------


def fd_steps(indices, scale: float = 1e-4) -> np.ndarray:
    """Per-variable central-difference steps, as a fraction of the
    optimization box span so every unit system is treated alike."""
    span = default_bounds().span
    return scale * span[list(indices)]


def _tight_model(model: MachineModel) -> MachineModel:
    """Clone with a tighter Newton tolerance so solver noise stays far
    below the finite-difference resolution."""
    opts = dict(model.solver_options)
    opts.setdefault("tol_rel", 1e-11)
    return MachineModel(
        constants=model.constants, materials=model.materials,
        refine=model.refine, degree=model.degree, n_gauss=model.n_gauss,
        mortar_gauss=model.mortar_gauss, n_harmonics=model.n_harmonics,
        grid=model.grid, weights=model.weights,
        current_density=model.current_density, fill=model.fill,
        conductivity=model.conductivity, solver_options=opts,
        n_threads=model.n_threads)


def objective_fd(model: MachineModel, design: DesignVector,
                 variables=None, steps=None) -> np.ndarray:
    """Central finite differences of the scalarized objective: the
    oracle route that the adjoint gradient is verified against."""
    sel = normalize_variables(variables)
    h = fd_steps(sel) if steps is None else np.broadcast_to(
        np.asarray(steps, dtype=float), (len(sel),))
    tight = _tight_model(model)
    x = design.as_array()
    out = np.empty(len(sel))
    for j, v in enumerate(sel):
        fp = tight.evaluate(design.with_variable(v, x[v] + h[j])).f_opt
        fm = tight.evaluate(design.with_variable(v, x[v] - h[j])).f_opt
        out[j] = (fp - fm) / (2.0 * h[j])
    return out
