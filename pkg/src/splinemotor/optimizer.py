"""Constrained design optimization of the machine cross section.

The weighted-sum objective (material cost, summed torque ripple, Joule
loss) is minimized over the 22 design variables subject to box bounds,
the mean-torque target and geometric feasibility.  The engine is an
augmented Lagrangian outer loop around a projected quasi-Newton bound
solver; every function and gradient evaluation solves the full operating
grid and differentiates it with the adjoint pipeline, so the per-iterate
cost does not grow with the number of variables.

All variables are normalized onto [0, 1] by their bounds before the
solver sees them; mixed units (meters, radians, a dimensionless scale)
would otherwise wreck quasi-Newton conditioning.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .geometry import DesignVector
from .geometry.design import VARIABLE_NAMES, DesignBounds, default_bounds
from .geometry.feasibility import feasibility
from .geometry.patchwork import GeometryError
from .pipeline import MachineModel, ObjectiveWeights, OperatingGrid
from .sensitivity import gradient_report
from .solver import SolverError

#: Merit assigned to evaluation failures during a line search; large
#: enough that any backtracking step beats it, finite so the inner
#: solver keeps functioning.
FAILED_MERIT = 1e30

#: Penalty growth factor and its safeguard ceiling.
PENALTY_GROWTH = 10.0
PENALTY_CAP = 1e12

#: Violation must shrink by this factor per outer iteration, otherwise
#: the penalty is increased.
VIOLATION_DECREASE = 0.25

#: Multipliers update only when the violation meets the forcing target
#: eta (classical safeguarding); these set its initial value, how it
#: tightens with the penalty, and the multiplier ceiling.
ETA_INITIAL = 0.1
ETA_TIGHTEN = 0.9
ETA_RESET = 0.1
MULTIPLIER_CAP = 1e9


def projected_gradient_norm(x, grad, lower, upper) -> float:
    """Infinity norm of x - P(x - grad), the bound-constrained
    first-order optimality measure."""
    return float(np.max(np.abs(x - np.clip(x - grad, lower, upper))))


@dataclass
class EngineIterate:
    """One accepted inner iterate, reported through the engine callback."""

    x: np.ndarray
    merit: float
    objective: float
    violation: float
    step_norm: float
    stage: int


@dataclass
class EngineResult:
    x: np.ndarray
    objective: float
    multipliers: np.ndarray
    penalty: float
    pg_norm: float
    violation: float
    n_iterations: int
    converged: bool
    message: str


def scipy_lbfgsb_inner(merit_fun, x0, lower, upper, maxiter, pgtol,
                       callback):
    """External-solver hook example wrapping scipy's bounded L-BFGS-B.

    Any replacement inner solver must honour this signature and return
    (x, n_iterations, hit_line_search_failure).  Note that this solver's
    interpolating line search handles poisoned merits (failed state
    solves) poorly; the built-in `projected_lbfgs` is the default."""
    res = minimize(merit_fun, x0, jac=True, method="L-BFGS-B",
                   bounds=list(zip(lower, upper)), callback=callback,
                   options={"maxiter": maxiter, "gtol": pgtol,
                            "ftol": 1e-14, "maxls": 40})
    bad_ls = "ABNORMAL" in str(res.message).upper()
    return np.clip(res.x, lower, upper), int(res.nit), bad_ls


def projected_lbfgs(merit_fun, x0, lower, upper, maxiter, pgtol, callback,
                    memory: int = 10, max_backtracks: int = 30,
                    armijo: float = 1e-4):
    """Bound-constrained limited-memory quasi-Newton descent.

    Components pressed against a bound by the gradient are frozen out of
    the quasi-Newton direction; steps follow projected backtracking
    Armijo, halving up to `max_backtracks` times.  A failed evaluation
    (merit >= FAILED_MERIT) just backtracks further, which is the whole
    reason this exists: interpolating line searches misbehave on the
    poisoned values a diverged state solve produces.

    Returns (x, accepted_steps, line_search_failed).
    """
    x = np.clip(np.asarray(x0, float), lower, upper)
    f, g = merit_fun(x)
    if f >= FAILED_MERIT:
        return x, 0, True
    pairs: list[tuple[np.ndarray, np.ndarray, float]] = []
    nit = 0
    stagnant = 0
    for _ in range(maxiter):
        if projected_gradient_norm(x, g, lower, upper) <= pgtol:
            break
        at_lower = (x <= lower + 1e-12) & (g > 0.0)
        at_upper = (x >= upper - 1e-12) & (g < 0.0)
        free = ~(at_lower | at_upper)
        q = np.where(free, g, 0.0)

        d = q.copy()
        alphas = []
        for s, y, rho in reversed(pairs):
            a = rho * (s @ d)
            alphas.append(a)
            d -= a * y
        if pairs:
            s, y, _ = pairs[-1]
            d *= (s @ y) / (y @ y)
        for (s, y, rho), a in zip(pairs, reversed(alphas)):
            d += s * (a - rho * (y @ d))
        d = np.where(free, -d, 0.0)
        if d @ g >= 0.0:
            d = -q

        # unit-length first trial; scale-free so uniformly scaled merits
        # retrace the same iterates exactly
        t = 1.0 if pairs else 1.0 / max(np.linalg.norm(q), 1e-12)
        accepted = False
        last_failed = False
        for _ in range(max_backtracks):
            x_t = np.clip(x + t * d, lower, upper)
            f_t, g_t = merit_fun(x_t)
            last_failed = f_t >= FAILED_MERIT
            if not last_failed and f_t <= f + armijo * (g @ (x_t - x)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            floor = 8.0 * np.finfo(float).eps * max(abs(f), 1.0)
            if not last_failed and abs(armijo * (g @ (x_t - x))) < floor:
                # the demanded decrease is below representable resolution:
                # the stage is as converged as the arithmetic allows
                break
            return x, nit, True
        if f - f_t <= 1e-14 * max(abs(f), 1.0):
            stagnant += 1
            if stagnant >= 2:
                x, f, g = x_t, f_t, g_t
                nit += 1
                callback(x)
                break
        else:
            stagnant = 0
        s_vec = x_t - x
        y_vec = g_t - g
        curv = s_vec @ y_vec
        if curv > 1e-10 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            pairs.append((s_vec, y_vec, 1.0 / curv))
            if len(pairs) > memory:
                pairs.pop(0)
        x, f, g = x_t, f_t, g_t
        nit += 1
        callback(x)
    return x, nit, False


def augmented_lagrangian(fun, x0, lower, upper, tol_opt=1e-8, tol_con=1e-8,
                         max_outer=10, inner_maxiter=100,
                         max_iterations=1000, initial_penalty=1.0,
                         inner_solver=None, callback=None) -> EngineResult:
    """Minimize fun subject to bounds and inequality constraints c <= 0.

    `fun(x)` must return ``(f, grad, c, jac_c)`` with `c` the constraint
    values (feasible when <= 0) and `jac_c` their Jacobian; both may be
    empty.  The augmented term for multipliers mu and penalty rho is

        psi(c) = sum_i (max(0, mu_i + rho c_i)^2 - mu_i^2) / (2 rho)

    so feasible constraints with zero multiplier contribute nothing.
    Multipliers update as mu <- max(0, mu + rho c); the penalty grows by
    PENALTY_GROWTH whenever the violation fails to shrink by
    VIOLATION_DECREASE.  A failed evaluation (f >= FAILED_MERIT) poisons
    the merit so the line search backs off instead of crashing.

    `inner_solver` replaces the bounded quasi-Newton stage solver; see
    `projected_lbfgs` (the default) and `scipy_lbfgsb_inner` for the
    required signature.
    """
    if max_outer < 1:
        raise ValueError("max_outer must be at least 1")
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    x = np.clip(np.asarray(x0, float), lower, upper)

    def split(z):
        f, g, c, J = fun(z)
        c = np.atleast_1d(np.asarray(c, float)) if c is not None \
            else np.zeros(0)
        viol = float(np.max(np.clip(c, 0.0, None), initial=0.0))
        return f, np.asarray(g, float), c, J, viol

    f, g, c, J, violation = split(x)
    m = len(c)
    mu = np.zeros(m)
    rho = float(initial_penalty)
    prev_violation = np.inf
    n_total = 0
    # best-so-far: feasible with the lowest objective, else the least violation
    best = {"x": x.copy(), "objective": f, "violation": violation,
            "feasible": violation <= tol_con}

    def consider(z, fz, viol):
        if fz >= FAILED_MERIT:
            return
        if viol <= tol_con:
            if not best["feasible"] or fz < best["objective"]:
                best.update(x=np.array(z), objective=fz, violation=viol,
                            feasible=True)
        elif not best["feasible"] and viol < best["violation"]:
            best.update(x=np.array(z), objective=fz, violation=viol)

    message, converged = "", False
    pg = np.inf
    stalls = 0
    eta = ETA_INITIAL
    for outer in range(max_outer):
        def merit_fun(z, _mu=mu.copy(), _rho=rho):
            fz, gz, cz, Jz = fun(z)
            if not np.isfinite(fz) or fz >= FAILED_MERIT:
                return FAILED_MERIT, np.zeros_like(z)
            if m == 0:
                return fz, np.array(gz, float)
            s = _mu + _rho * np.asarray(cz, float)
            act = s > 0.0
            psi = float(np.sum(s[act] ** 2 - _mu[act] ** 2)) / (2.0 * _rho)
            grad = np.asarray(gz, float) + s[act] @ np.asarray(Jz, float)[act]
            return fz + psi, grad

        prev = {"x": x.copy()}

        def stage_callback(xk, _stage=outer, _prev=prev, _merit=merit_fun):
            nonlocal n_total
            n_total += 1
            fm, _ = _merit(xk)
            fx, _, _, _, viol = split(xk)
            step = float(np.linalg.norm(xk - _prev["x"]))
            _prev["x"] = np.array(xk)
            consider(xk, fx, viol)
            if callback is not None:
                callback(EngineIterate(np.array(xk), fm, fx, viol, step,
                                       _stage))

        budget = min(inner_maxiter, max_iterations - n_total)
        if budget <= 0:
            message = "iteration budget exhausted"
            break
        solve = inner_solver or projected_lbfgs
        x, nit, bad_ls = solve(merit_fun, x, lower, upper, budget,
                               0.1 * tol_opt, stage_callback)

        f, g, c, J, violation = split(x)
        consider(x, f, violation)
        _, merit_grad = merit_fun(x)
        pg = projected_gradient_norm(x, merit_grad, lower, upper)
        if pg <= tol_opt and violation <= tol_con:
            converged = True
            message = f"converged after {outer + 1} outer iterations"
            break
        if bad_ls and nit == 0:
            # a single stalled stage may recover once the multipliers
            # move; repeated stalls (or none possible) end the run
            stalls += 1
            if m == 0 or stalls >= 2:
                message = ("line search failed to make progress; "
                           "returning best iterate found")
                break
        else:
            stalls = 0
        if m:
            if violation <= max(eta, tol_con):
                mu = np.clip(mu + rho * c, 0.0, MULTIPLIER_CAP)
                eta = max(eta / rho ** ETA_TIGHTEN, 0.1 * tol_con)
                if violation > VIOLATION_DECREASE * prev_violation \
                        and rho < PENALTY_CAP:
                    rho *= PENALTY_GROWTH
            else:
                rho = min(rho * PENALTY_GROWTH, PENALTY_CAP)
                eta = max(ETA_INITIAL / rho ** ETA_RESET, 0.1 * tol_con)
            prev_violation = max(violation, 1e-300)
    else:
        message = f"stopped after {max_outer} outer iterations"

    if not converged:
        x = best["x"]
        f, g, c, J, violation = split(x)
        _, merit_grad = merit_fun(x)
        pg = projected_gradient_norm(x, merit_grad, lower, upper)
    return EngineResult(x=x, objective=f, multipliers=mu, penalty=rho,
                        pg_norm=pg, violation=violation,
                        n_iterations=n_total, converged=converged,
                        message=message)


@dataclass(frozen=True)
class ObjectiveComponents:
    """The three weighted objective parts plus the constraint quantity."""

    mass: float
    ripple: float
    loss: float
    mean_torque: float | None = None

    def combine(self, weights: ObjectiveWeights) -> float:
        return (weights.mass * self.mass + weights.ripple * self.ripple
                + weights.loss * self.loss)

    def triple(self) -> tuple[float, float, float]:
        return (self.mass, self.ripple, self.loss)


def evaluate_objective(model: MachineModel, design: DesignVector
                       ) -> tuple[float, ObjectiveComponents]:
    """Solve the full operating grid and return (f_opt, components)."""
    ev = model.evaluate(design)
    comp = ObjectiveComponents(ev.mass_cost, ev.ripple_sum, ev.loss_kw,
                               ev.mean_torque)
    return ev.f_opt, comp


@dataclass(frozen=True)
class OptimizationProblem:
    """Weighted-sum machine design problem over the bounded variables.

    The torque target lives inside `weights.target_torque`; `tol_con` is
    relative on mean torque over target and absolute on the air-gap
    scaled geometry rows.
    """

    weights: ObjectiveWeights = ObjectiveWeights()
    bounds: DesignBounds = field(default_factory=default_bounds)
    grid: OperatingGrid = OperatingGrid()
    tol_opt: float = 1e-5
    tol_con: float = 1e-6
    max_outer: int = 8
    inner_maxiter: int = 40
    max_iterations: int = 150

    def __post_init__(self):
        w = self.weights
        if min(w.mass, w.ripple, w.loss) < 0 or w.target_torque < 0:
            raise ValueError("objective weights must be nonnegative")

    @property
    def target_torque(self) -> float:
        return self.weights.target_torque


@dataclass
class TraceRow:
    """One accepted iterate of the optimization.

    `z` is the normalized copy of the variables the solver actually
    moved; bounds hold on it exactly, while `x` can sit an ulp past a
    bound from denormalization and is therefore clipped.
    """

    iteration: int
    stage: int
    x: np.ndarray
    z: np.ndarray
    f_opt: float
    mass: float
    mean_torque: float
    ripple: float
    loss: float
    violation: float
    step_norm: float
    merit: float


@dataclass
class OptimizationTrace:
    rows: list[TraceRow]
    converged: bool
    message: str
    multipliers: dict
    penalty: float
    pg_norm: float
    violation: float
    active_bounds: list[str]
    active_constraints: list[str]
    n_evaluations: int

    @property
    def n_iterations(self) -> int:
        return len(self.rows)


class _DesignObjective:
    """Engine-facing objective over normalized variables.

    Returns (f, df/dz, c, dc/dz) with c[0] the relative torque shortfall
    and the remaining rows the geometric feasibility values scaled by
    the air-gap width.  Heavy evaluations are cached by the variable
    bytes so the trace callback and outer loop reuse line-search points.
    """

    CACHE_SIZE = 8

    def __init__(self, model: MachineModel, problem: OptimizationProblem):
        self.model = model
        self.problem = problem
        self.bounds = problem.bounds
        self.gap = model.constants.air_gap
        self.cache: OrderedDict = OrderedDict()
        self.n_evaluations = 0
        self.n_failures = 0
        self.last_error: str | None = None
        self._n_rows: int | None = None

    def components(self, z: np.ndarray):
        """(Evaluation, GradientReport, FeasibilityResult) at z, or None
        if the point is unsolvable."""
        key = np.asarray(z, float).tobytes()
        if key in self.cache:
            self.cache.move_to_end(key)
            return self.cache[key]
        design = self.bounds.denormalize(z)
        try:
            ev = self.model.evaluate(design)
            rep = gradient_report(self.model, evaluation=ev)
            fes = feasibility(design, self.model.constants,
                              ev.built.patchwork)
            entry = (ev, rep, fes)
        except (GeometryError, SolverError) as exc:
            self.n_failures += 1
            self.last_error = str(exc)
            entry = None
        self.n_evaluations += 1
        self.cache[key] = entry
        while len(self.cache) > self.CACHE_SIZE:
            self.cache.popitem(last=False)
        return entry

    def __call__(self, z):
        entry = self.components(z)
        n = len(z)
        if entry is None:
            m = self._n_rows if self._n_rows is not None else 1
            return FAILED_MERIT, np.zeros(n), np.zeros(m), np.zeros((m, n))
        ev, rep, fes = entry
        span = self.bounds.span
        target = self.problem.target_torque
        f = ev.f_opt
        grad = rep.objective * span

        if target > 0:
            c_t = (target - ev.mean_torque) / target
            j_t = -(rep.mean_torque * span) / target
        else:
            c_t, j_t = -1.0, np.zeros(n)
        c = np.concatenate(([c_t], fes.values / self.gap))
        jac = np.vstack((j_t, fes.jacobian * span[None, :] / self.gap))
        self._n_rows = len(c)
        return f, grad, c, jac


def _model_for(problem: OptimizationProblem, model: MachineModel | None,
               **model_kwargs) -> MachineModel:
    if model is None:
        return MachineModel(grid=problem.grid, weights=problem.weights,
                            **model_kwargs)
    if model.weights != problem.weights:
        raise ValueError("model weights differ from the problem weights; "
                         "build the model from the problem instead")
    return model


def optimize(problem: OptimizationProblem, x0: DesignVector,
             model: MachineModel | None = None, inner_solver=None,
             **model_kwargs) -> tuple[DesignVector, OptimizationTrace]:
    """Minimize the weighted objective from x0; returns the final design
    and the per-iteration trace.

    x0 must satisfy the bounds and the geometric feasibility rows; the
    torque target may start inactive or violated.  On line-search
    failure the best iterate found is returned with a diagnostic in the
    trace message.
    """
    model = _model_for(problem, model, **model_kwargs)
    if not problem.bounds.contains(x0):
        raise ValueError("x0 violates the variable bounds")
    fes0 = feasibility(x0, model.constants)
    if fes0.max_violation() > 1e-12:
        worst = fes0.names[int(np.argmax(fes0.values))]
        raise ValueError(f"x0 is geometrically infeasible ({worst})")

    objective = _DesignObjective(model, problem)
    z0 = problem.bounds.normalize(x0)
    rows: list[TraceRow] = []

    def record(it: EngineIterate):
        entry = objective.components(it.x)
        if entry is None:
            return
        ev, _, _ = entry
        x = np.clip(problem.bounds.denormalize(it.x).as_array(),
                    problem.bounds.lower, problem.bounds.upper)
        rows.append(TraceRow(
            iteration=len(rows), stage=it.stage, x=x, z=np.array(it.x),
            f_opt=ev.f_opt, mass=ev.mass_cost, mean_torque=ev.mean_torque,
            ripple=ev.ripple_sum, loss=ev.loss_kw, violation=it.violation,
            step_norm=it.step_norm, merit=it.merit))

    res = augmented_lagrangian(
        objective, z0, np.zeros(22), np.ones(22),
        tol_opt=problem.tol_opt, tol_con=problem.tol_con,
        max_outer=problem.max_outer, inner_maxiter=problem.inner_maxiter,
        max_iterations=problem.max_iterations, inner_solver=inner_solver,
        callback=record)

    z = res.x
    active_bounds = [VARIABLE_NAMES[i] for i in range(len(z))
                     if z[i] <= 1e-9 or z[i] >= 1.0 - 1e-9]
    entry = objective.components(z)
    active_constraints: list[str] = []
    multipliers: dict = {"torque": float(res.multipliers[0])
                         if len(res.multipliers) else 0.0}
    if entry is not None:
        _, _, fes = entry
        geo_mu = res.multipliers[1:] if len(res.multipliers) > 1 else []
        multipliers["geometry"] = {
            name: float(mu) for name, mu in zip(fes.names, geo_mu)
            if mu > 0.0}
        _, _, c, _ = objective(z)
        if c[0] >= -problem.tol_con:
            active_constraints.append("torque_target")
        active_constraints += [fes.names[k] for k in range(len(fes.values))
                               if c[1 + k] >= -problem.tol_con]
    trace = OptimizationTrace(
        rows=rows, converged=res.converged, message=res.message,
        multipliers=multipliers, penalty=res.penalty, pg_norm=res.pg_norm,
        violation=res.violation, active_bounds=active_bounds,
        active_constraints=active_constraints,
        n_evaluations=objective.n_evaluations)
    x_opt = problem.bounds.clip(problem.bounds.denormalize(z))
    return x_opt, trace


def flag_dominated(triples) -> list[bool]:
    """Standard Pareto dominance over component triples: an entry is
    dominated when another is no worse in every component and strictly
    better in at least one."""
    pts = [np.asarray(t, float) for t in triples]
    flags = []
    for i, a in enumerate(pts):
        flags.append(any(np.all(b <= a) and np.any(b < a)
                         for j, b in enumerate(pts) if j != i))
    return flags


@dataclass(frozen=True)
class ParetoPoint:
    weights: ObjectiveWeights
    design: DesignVector | None
    components: ObjectiveComponents | None
    f_opt: float | None
    dominated: bool | None
    error: str | None = None


def pareto_sweep(weight_grid, x0: DesignVector,
                 problem: OptimizationProblem | None = None,
                 model_factory=None, **model_kwargs) -> list[ParetoPoint]:
    """Independent optimize runs over a grid of weight triples, with the
    dominated designs flagged.  Per-run failures are isolated into the
    returned entries instead of aborting the sweep.

    `weight_grid` holds (m_mass, m_ripple, m_loss) triples or
    ObjectiveWeights; the torque target of the base problem is kept.
    """
    base = problem or OptimizationProblem()
    results: list[dict] = []
    for w in weight_grid:
        if not isinstance(w, ObjectiveWeights):
            w = ObjectiveWeights(mass=w[0], ripple=w[1], loss=w[2],
                                 target_torque=base.weights.target_torque)
        prob = replace(base, weights=w)
        model = (model_factory(prob) if model_factory is not None
                 else _model_for(prob, None, **model_kwargs))
        try:
            x_opt, trace = optimize(prob, x0, model=model)
            f, comp = evaluate_objective(model, x_opt)
            results.append({"weights": w, "design": x_opt,
                            "components": comp, "f_opt": f, "error": None})
        except (GeometryError, SolverError, ValueError) as exc:
            results.append({"weights": w, "design": None,
                            "components": None, "f_opt": None,
                            "error": str(exc)})
    solved = [r for r in results if r["error"] is None]
    flags = flag_dominated([r["components"].triple() for r in solved])
    flag_iter = iter(flags)
    return [ParetoPoint(r["weights"], r["design"], r["components"],
                        r["f_opt"],
                        next(flag_iter) if r["error"] is None else None,
                        r["error"])
            for r in results]
