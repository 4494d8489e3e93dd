"""Per-step optimization: Projected Newton on the incremental potential with
CCD-filtered line search, lagged friction, augmented-Lagrangian constraints,
and barrier-stiffness adaptation.

The assembled objective is

    E(x) = inertia + h^2 (elastic + shell + orthogonality)
         + kappa * sum b(d^2) + D_friction + constraint energies

minimized per step. Elastic/shell/orthogonality terms are built raw and
scaled by h^2 here; barrier and friction enter unscaled, so contact forces
carry an h^2 factor relative to Newtons (divide IP-unit forces by h^2 to
sense them).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .bodies import finalize_step, predictor
from .constraints import (
    KinematicConstraint,
    PrismaticJoint,
    SpringConstraint,
    kinematic_energy,
    multiplier_update,
    prismatic_energy,
    spring_energy,
)
from .energy.barrier import adapt_kappa
from .energy.contact import contact_energy
from .energy.elastic import elastic_term, elastic_value
from .energy.friction import FrictionLags, friction_term, update_friction_lags
from .energy.shell import bending_term, shell_term, shell_value
from .energy.term import combine
from .energy.terms import inertia_term, inertia_value, orthogonality_term
from .geometry.broadphase import broad_phase, broad_phase_ccd
from .geometry.ccd import IntersectionError, ccd_earliest_alpha
from .scene import Scene

log = logging.getLogger(__name__)

ALPHA_FLOOR = 1e-12  # line-search failure threshold
AL_TOL = 1e-6  # constraint residual norm accepted by the outer loop

PHASES = ("DCD", "Energy", "Hess", "Linear", "CCD", "Others")


@dataclass
class SolverConfig:
    h: float = 0.01  # s
    newton_tol: float = 1e-2  # m/s, on ||p||_inf / h
    max_newton_iters: int = 100
    max_line_search_halvings: int = 64
    ccd_conservative_factor: float = 0.9
    friction_fixed_point_iters: int = 1
    al_max_outer: int = 20

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("time step must be positive")
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")
        if not 0.0 < self.ccd_conservative_factor < 1.0:
            raise ValueError("ccd_conservative_factor must lie in (0, 1)")


@dataclass
class StepReport:
    newton_iters: int = 0
    final_grad_norm: float = 0.0
    min_dist_before: float = np.inf
    min_dist_after: float = np.inf
    ccd_invocations: int = 0
    converged: bool = True
    line_search_failed: bool = False
    al_outer: int = 0
    times: dict = field(default_factory=lambda: {k: 0.0 for k in PHASES})
    total_time: float = 0.0

    def close(self, t_start: float) -> None:
        self.total_time = time.perf_counter() - t_start
        accounted = sum(v for k, v in self.times.items() if k != "Others")
        self.times["Others"] = max(self.total_time - accounted, 0.0)

    def as_dict(self) -> dict:
        return {
            "newton_iters": self.newton_iters,
            "final_grad_norm": self.final_grad_norm,
            "min_dist_before": self.min_dist_before,
            "min_dist_after": self.min_dist_after,
            "ccd_invocations": self.ccd_invocations,
            "converged": self.converged,
            "line_search_failed": self.line_search_failed,
            "al_outer": self.al_outer,
            "times": dict(self.times),
            "total_time": self.total_time,
        }


class _Timer:
    def __init__(self, sink: dict, key: str):
        self.sink = sink
        self.key = key

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.sink[self.key] += time.perf_counter() - self.t0


# =============================================================================
# Assembly
# =============================================================================


def _constraint_terms(scene: Scene, x: np.ndarray):
    state = scene.state
    terms = []
    for c in scene.constraints:
        if isinstance(c, KinematicConstraint):
            off = state.offset_of(c.body)
            terms.append(kinematic_energy(c, x[off : off + 12], off))
        elif isinstance(c, PrismaticJoint):
            o1 = state.offset_of(c.body1)
            o2 = state.offset_of(c.body2)
            terms.append(
                prismatic_energy(c, x[o1 : o1 + 12], x[o2 : o2 + 12], o1, o2)
            )
        elif isinstance(c, SpringConstraint):
            off = state.offset_of(c.body)
            dof = 12 if hasattr(c.body, "q") else c.body.dof
            terms.append(spring_energy(c, x[off : off + dof], off))
        else:
            raise TypeError(f"unknown constraint {type(c).__name__}")
    return terms


def _assemble(scene: Scene, x, xhat, xw_start, lags, cand, h):
    """All derivative EnergyTerms at x, plus contact stats."""
    state = scene.state
    terms = [inertia_term(x, xhat, state)]
    h2 = h * h
    for blk in state.blocks:
        b = blk.body
        if blk.is_affine:
            continue
        xb = x[blk.offset : blk.offset + blk.dof].reshape(-1, 3)
        if hasattr(b, "rest_volumes"):
            terms.append(elastic_term(b, xb, blk.offset).scaled(h2))
        else:
            terms.append(shell_term(b, xb, blk.offset).scaled(h2))
            if b.bend_stiffness > 0:
                st, ang = scene.bending_stencils(b)
                terms.append(bending_term(b, xb, blk.offset, st, ang).scaled(h2))
    terms.append(orthogonality_term(x, state).scaled(h2))

    xw = scene.cindex.world_positions(x)
    cterm, stats = contact_energy(
        xw, cand, scene.tables, scene.cindex, scene.barrier, scene.ground_y
    )
    terms.append(cterm)
    if lags is not None and lags.total:
        terms.append(
            friction_term(xw, xw_start, lags, scene.mu, scene.eps_v, h, scene.cindex)
        )
    terms.extend(_constraint_terms(scene, x))
    return terms, stats


def _total_value(scene: Scene, x, xhat, xw_start, lags, cand, h) -> float:
    """Objective value only; +inf past intersection or element inversion."""
    state = scene.state
    h2 = h * h
    total = inertia_value(x, xhat, state)
    for blk in state.blocks:
        b = blk.body
        if blk.is_affine:
            continue
        xb = x[blk.offset : blk.offset + blk.dof].reshape(-1, 3)
        if hasattr(b, "rest_volumes"):
            v = elastic_value(b, xb)
            if not np.isfinite(v):
                return np.inf
            total += h2 * v
        else:
            total += h2 * shell_value(b, xb)
            if b.bend_stiffness > 0:
                st, ang = scene.bending_stencils(b)
                total += h2 * bending_term(b, xb, blk.offset, st, ang).value
    total += h2 * orthogonality_term(x, state, derivatives=False).value

    xw = scene.cindex.world_positions(x)
    cterm, _ = contact_energy(
        xw,
        cand,
        scene.tables,
        scene.cindex,
        scene.barrier,
        scene.ground_y,
        derivatives=False,
    )
    if not np.isfinite(cterm.value):
        return np.inf
    total += cterm.value
    if lags is not None and lags.total:
        total += friction_term(
            xw, xw_start, lags, scene.mu, scene.eps_v, h, scene.cindex,
            derivatives=False,
        ).value
    for t in _constraint_terms(scene, x):
        total += t.value
    return total


def _combine(terms, n_dof):
    value, grad, (rows, cols, vals) = combine(terms, n_dof)
    h = sp.coo_matrix((vals, (rows, cols)), shape=(n_dof, n_dof)).tocsc()
    return value, grad, h


# =============================================================================
# Newton pieces
# =============================================================================


def convergence_check(p: np.ndarray, h: float, tol: float) -> bool:
    """Velocity-units stopping rule: ||p||_inf / h <= tol (inclusive)."""
    if len(p) == 0:
        return True
    return bool(np.abs(p).max() / h <= tol)


def newton_iteration(grad: np.ndarray, hess: sp.csc_matrix) -> np.ndarray:
    """Search direction p solving H p = -g, falling back to -g if the
    factorization fails or p is not a descent direction."""
    if len(grad) == 0:
        return np.zeros(0)
    try:
        p = splu(hess).solve(-grad)
    except RuntimeError as e:
        log.warning("sparse factorization failed (%s); gradient descent step", e)
        return -grad
    if not np.isfinite(p).all() or (p @ grad) > 0.0:
        log.warning("non-descent Newton direction; gradient descent step")
        return -grad
    return p


def filtered_line_search(value_fn, x, p, e0, alpha0, max_halvings):
    """Backtracking from the CCD bound until the objective stops increasing.

    Returns (alpha, x_new, e_new); alpha = 0.0 signals failure (step length
    underflowed ALPHA_FLOOR before the objective decreased).
    """
    alpha = alpha0
    for _ in range(max_halvings):
        if alpha < ALPHA_FLOOR:
            break
        x_new = x + alpha * p
        e_new = value_fn(x_new)
        if e_new <= e0:
            return alpha, x_new, e_new
        alpha *= 0.5
    return 0.0, x, e0


def friction_update(scene: Scene, x: np.ndarray, h: float) -> FrictionLags:
    """Freeze contact normal forces and tangent frames at x for the next solve.

    Lagged normal magnitudes are in incremental-potential units (Newtons
    times h^2), matching the unscaled barrier term they derive from.
    """
    xw = scene.cindex.world_positions(x)
    cand = broad_phase(
        xw, scene.tables, scene.barrier.dhat, scene.ground_y, scene.bp_cache
    )
    return update_friction_lags(
        xw, cand, scene.tables, scene.cindex, scene.barrier, scene.ground_y
    )


# =============================================================================
# The step
# =============================================================================


def _newton_solve(scene, x0, xhat, xw_start, lags, config, report):
    """Inner Projected-Newton minimization. Returns (x, grad_norm).

    Convergence needs two consecutive small, non-growing directions: inside
    the stiff near-zero friction basin (radius eps_v * h) the local Hessian
    understates how far the minimizer is, so directions stay under tolerance
    while growing step over step until the iterate escapes. Small directions
    are therefore applied, and the loop stops once they start shrinking (or
    after a long run of small steps, whichever comes first).
    """
    state = scene.state
    h = config.h
    dhat = scene.barrier.dhat
    x = x0.copy()
    grad_norm = 0.0
    small_run = 0
    prev_pnorm = np.inf
    for _ in range(config.max_newton_iters):
        xw = scene.cindex.world_positions(x)
        with _Timer(report.times, "DCD"):
            cand = broad_phase(
                xw, scene.tables, dhat, scene.ground_y, scene.bp_cache
            )
        with _Timer(report.times, "Energy"):
            terms, stats = _assemble(scene, x, xhat, xw_start, lags, cand, h)
        report.min_dist_before = min(report.min_dist_before, stats.min_dist)
        with _Timer(report.times, "Hess"):
            e0, grad, hess = _combine(terms, state.n_dof)
        grad_norm = float(np.abs(grad).max()) if len(grad) else 0.0
        with _Timer(report.times, "Linear"):
            p = newton_iteration(grad, hess)
        report.newton_iters += 1
        pnorm = float(np.abs(p).max()) if len(p) else 0.0
        small = convergence_check(p, h, config.newton_tol)
        if small and small_run >= 1 and (pnorm <= prev_pnorm or small_run >= 7):
            return x, grad_norm
        small_run = small_run + 1 if small else 0
        prev_pnorm = pnorm
        with _Timer(report.times, "CCD"):
            xw_target = scene.cindex.world_positions(x + p)
            dxw = xw_target - xw
            sweep = broad_phase_ccd(
                xw, dxw, scene.tables, inflation=dhat, ground_y=scene.ground_y
            )
            alpha_max = ccd_earliest_alpha(
                xw, dxw, sweep, scene.tables, scene.ground_y,
                conservative=config.ccd_conservative_factor,
            )
            report.ccd_invocations += 1

        def value_fn(x_trial):
            with _Timer(report.times, "Energy"):
                return _total_value(scene, x_trial, xhat, xw_start, lags, sweep, h)

        alpha, x, _ = filtered_line_search(
            value_fn, x, p, e0, alpha_max, config.max_line_search_halvings
        )
        if alpha == 0.0:
            report.line_search_failed = True
            report.converged = False
            return x, grad_norm
    report.converged = False
    return x, grad_norm


def step(scene: Scene, config: SolverConfig) -> tuple[object, StepReport]:
    """Advance the scene one time step; returns (state, StepReport).

    Raises IntersectionError if the incoming state already has touching or
    penetrating contact pairs (within broad-phase reach).
    """
    t_start = time.perf_counter()
    report = StepReport()
    state = scene.state
    h = config.h
    x_prev = state.gather()

    # pre-step feasibility: any candidate pair at non-positive distance is a
    # hard error (deep penetrations beyond dhat reach are the repair module's
    # concern, not the stepper's)
    xw0 = scene.cindex.world_positions(x_prev)
    with _Timer(report.times, "DCD"):
        cand0 = broad_phase(
            xw0, scene.tables, scene.barrier.dhat, scene.ground_y, scene.bp_cache
        )
    v0, _ = contact_energy(
        xw0, cand0, scene.tables, scene.cindex, scene.barrier, scene.ground_y,
        derivatives=False,
    )
    if not np.isfinite(v0.value):
        raise IntersectionError("step started from an intersecting state")

    xhat = predictor(state, h, scene.gravity)

    mult_constraints = [
        c
        for c in scene.constraints
        if isinstance(c, (KinematicConstraint, PrismaticJoint))
    ]
    for c in mult_constraints:
        # fresh augmented-Lagrangian cycle per step
        c.lam = np.zeros(12)
        c.kappa = c.kappa0
        c.last_residual = np.inf
        if isinstance(c, KinematicConstraint) and c.body.target_q is not None:
            c.target = np.asarray(c.body.target_q, dtype=np.float64).copy()

    x = x_prev
    grad_norm = 0.0
    lags = None
    for fp in range(max(config.friction_fixed_point_iters, 1)):
        anchor = x_prev if fp == 0 else x
        lags = friction_update(scene, anchor, h)
        if not mult_constraints:
            report.al_outer = max(report.al_outer, 1)
            x, grad_norm = _newton_solve(
                scene, x, xhat, xw0, lags, config, report
            )
        else:
            for outer in range(config.al_max_outer):
                x, grad_norm = _newton_solve(
                    scene, x, xhat, xw0, lags, config, report
                )
                res = 0.0
                for c in mult_constraints:
                    if isinstance(c, KinematicConstraint):
                        off = state.offset_of(c.body)
                        res = max(res, multiplier_update(c, x[off : off + 12]))
                    else:
                        o1 = state.offset_of(c.body1)
                        o2 = state.offset_of(c.body2)
                        res = max(
                            res,
                            multiplier_update(
                                c, x[o1 : o1 + 12], x[o2 : o2 + 12]
                            ),
                        )
                report.al_outer = max(report.al_outer, outer + 1)
                if res <= AL_TOL or report.line_search_failed:
                    break
        if report.line_search_failed:
            break
    report.final_grad_norm = grad_norm

    # post-step distance for the report and barrier adaptation
    xw1 = scene.cindex.world_positions(x)
    with _Timer(report.times, "DCD"):
        cand1 = broad_phase(
            xw1, scene.tables, scene.barrier.dhat, scene.ground_y, scene.bp_cache
        )
    _, stats1 = contact_energy(
        xw1, cand1, scene.tables, scene.cindex, scene.barrier, scene.ground_y,
        derivatives=False,
    )
    report.min_dist_after = stats1.min_dist
    scene.barrier = adapt_kappa(scene.barrier, stats1.min_dist, scene.kappa0)

    finalize_step(state, x_prev, x, h)
    report.close(t_start)
    return state, report


def simulate(scene: Scene, config: SolverConfig, n_steps: int, callback=None):
    """Step n_steps times; returns the list of StepReports.

    callback(step_index, scene, report) runs after every step when given.
    """
    reports = []
    for i in range(n_steps):
        _, rep = step(scene, config)
        reports.append(rep)
        if callback is not None:
            callback(i, scene, rep)
    return reports
