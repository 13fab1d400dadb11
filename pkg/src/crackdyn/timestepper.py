"""Implicit time integration of the semidiscrete contact problem.

Newmark kinematics with parameters (b, g):

    u+ = u + dt*v + dt^2*((1/2 - b)*a + b*a+)
    v+ = v + dt*((1 - g)*a + g*a+)

The nonlinear force balance is enforced at the g-weighted state
x_g = (1-g)*x + g*x+ and time t + g*dt.  For the default trapezoidal
pair (b, g) = (1/4, 1/2) this is the midpoint evaluation, which makes
the interface terms dissipate exactly (they are tested against their
own arguments); g = 1 recovers the fully implicit end-of-step balance.
The Newton unknown is the end-of-step acceleration; every Newton system
is symmetric positive definite and solved by preconditioned CG.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import fem, interface
from .fem import DofMap, Material, State
from .interface import ContactParams, CrackQuadrature

__all__ = [
    "TimeParams",
    "Operators",
    "build_operators",
    "CompatibilityWarning",
    "StepFailure",
    "initial_acceleration",
    "step",
    "run",
    "StepInfo",
]

_CG_TOL = 1e-12
_MAX_HALVINGS = 5
_COMPAT_TOL = 1e-10


class CompatibilityWarning(UserWarning):
    """Initial data violates the interface compatibility conditions."""


class StepFailure(RuntimeError):
    """Newton failed to converge even after repeated step halving."""

    def __init__(self, message, t, dt, residual, iterations):
        super().__init__(message)
        self.t = t
        self.dt = dt
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class TimeParams:
    """Time grid and solver controls.

    newmark_b in [0, 1/2], newmark_g in [1/2, 1]; the defaults give the
    second-order non-dissipative scheme.  newton_tol is relative to the
    larger of the load norm and the initial Newton residual of the step.
    """

    t_end: float
    dt: float
    newmark_b: float = 0.25
    newmark_g: float = 0.5
    newton_tol: float = 1e-10
    newton_maxit: int = 30

    def __post_init__(self):
        if not self.t_end >= 0:
            raise ValueError("t_end must be nonnegative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0.0 <= self.newmark_b <= 0.5:
            raise ValueError("newmark_b must lie in [0, 1/2]")
        if not 0.5 <= self.newmark_g <= 1.0:
            raise ValueError("newmark_g must lie in [1/2, 1]")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.newton_maxit < 1:
            raise ValueError("newton_maxit must be at least 1")


@dataclass
class StepInfo:
    """Newton bookkeeping for one accepted step."""

    iterations: int
    residual: float
    tol_abs: float
    substeps: int = 1


@dataclass
class Operators:
    """Assembled, mesh-bound operators shared by the stepping routines."""

    mesh: object
    material: Material
    dofmap: DofMap
    contact: ContactParams
    quad: CrackQuadrature
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    mass_pinned: sp.csr_matrix
    stiffness_pinned: sp.csr_matrix
    load: Callable[[float], np.ndarray]
    _jac_cache: dict = field(default_factory=dict, repr=False)

    def pin(self, a: sp.csr_matrix) -> sp.csr_matrix:
        keep = sp.diags((~self.dofmap.constrained).astype(float))
        return (keep @ a @ keep).tocsr()

    def linear_jacobian(self, dt: float, b: float, g: float) -> sp.csr_matrix:
        key = (dt, b, g)
        if key not in self._jac_cache:
            self._jac_cache[key] = (
                g * (self.mass_pinned + b * dt * dt * self.stiffness_pinned)
            ).tocsr()
        return self._jac_cache[key]


def build_operators(mesh, material: Material, contact: ContactParams,
                    f=None, trac=None) -> Operators:
    """Assemble mass, stiffness and the load callback for a problem."""
    dofmap = DofMap(mesh)
    mass = fem.assemble_mass(mesh, material)
    stiffness = fem.assemble_stiffness(mesh, material)
    quad = interface.build_crack_quadrature(mesh)

    if f is None and trac is None:
        zero = np.zeros(dofmap.ndof)

        def load(t: float) -> np.ndarray:
            return zero
    else:
        def load(t: float) -> np.ndarray:
            vec = fem.assemble_load(mesh, material, f, trac, t)
            vec[dofmap.constrained] = 0.0
            return vec

    return Operators(
        mesh=mesh,
        material=material,
        dofmap=dofmap,
        contact=contact,
        quad=quad,
        mass=mass,
        stiffness=stiffness,
        mass_pinned=fem.apply_dirichlet(mass, dofmap.constrained),
        stiffness_pinned=fem.apply_dirichlet(stiffness, dofmap.constrained),
        load=load,
    )


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def _check_compatibility(ops: Operators, u0, v0) -> None:
    quad = ops.quad
    if quad.n_pairs == 0:
        return
    s = (ops.contact.gamma * interface._normal_jump(u0, quad)
         + interface._normal_jump(v0, quad))
    worst = float(np.abs(s).max()) if s.size else 0.0
    if worst > _COMPAT_TOL:
        warnings.warn(
            f"initial data violates the normal compatibility condition "
            f"on the crack (|gamma*u_n + v_n| jump up to {worst:.3e})",
            CompatibilityWarning, stacklevel=3)
    _, jt = interface.split_jump(interface.jump_eval(v0, quad), quad)
    worst_t = float(np.linalg.norm(jt, axis=-1).max()) if jt.size else 0.0
    if worst_t > _COMPAT_TOL:
        warnings.warn(
            f"initial velocity has a tangential jump across the crack "
            f"(up to {worst_t:.3e})", CompatibilityWarning, stacklevel=3)


def initial_acceleration(ops: Operators, u0: np.ndarray, v0: np.ndarray,
                         t0: float = 0.0) -> np.ndarray:
    """Consistent initial acceleration from the force balance at t0.

    Emits CompatibilityWarning (never fatal) if the initial crack jumps
    violate the conditions under which the model is well posed.
    """
    _check_compatibility(ops, u0, v0)
    rhs = (ops.load(t0)
           - ops.stiffness @ u0
           - interface.contact_residual(u0, v0, ops.contact, ops.quad)
           - interface.friction_residual(v0, t0, ops.contact, ops.quad))
    rhs[ops.dofmap.constrained] = 0.0
    return fem.solve_spd(ops.mass_pinned, rhs, tol=_CG_TOL)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def _solve_substep(state: State, dt: float, ops: Operators,
                   params: TimeParams):
    """One Newmark interval; returns (new_state, iterations, residual,
    tol_abs) or raises SolveError/StepFailure internally via caller."""
    b = params.newmark_b
    g = params.newmark_g
    con = ops.dofmap.constrained
    gamma = ops.contact.gamma

    u_pred = state.u + dt * state.v + dt * dt * (0.5 - b) * state.a
    v_pred = state.v + dt * (1.0 - g) * state.a
    du = b * dt * dt          # d(u+)/d(a+)
    dv = g * dt               # d(v+)/d(a+)

    t_w = state.t + g * dt
    load_w = ops.load(t_w)
    norm_load = float(np.linalg.norm(load_w))

    a_new = state.a.copy()
    jac_lin = ops.linear_jacobian(dt, b, g)

    def residual(a_plus):
        u_w = (1.0 - g) * state.u + g * (u_pred + du * a_plus)
        v_w = (1.0 - g) * state.v + g * (v_pred + dv * a_plus)
        a_w = (1.0 - g) * state.a + g * a_plus
        r = (ops.mass @ a_w + ops.stiffness @ u_w
             + interface.contact_residual(u_w, v_w, ops.contact, ops.quad)
             + interface.friction_residual(v_w, t_w, ops.contact, ops.quad)
             - load_w)
        r[con] = 0.0
        return r, u_w, v_w

    r, u_w, v_w = residual(a_new)
    norm_r = float(np.linalg.norm(r))
    tol_abs = params.newton_tol * max(norm_load, norm_r)
    iterations = 0
    while norm_r > tol_abs:
        if iterations >= params.newton_maxit:
            return None, iterations, norm_r, tol_abs
        jac = (jac_lin
               + ops.pin(interface.contact_tangent(
                   u_w, v_w, ops.contact, ops.quad,
                   coeff_u=g * du, coeff_v=g * dv))
               + ops.pin(interface.friction_tangent(
                   v_w, t_w, ops.contact, ops.quad, coeff_v=g * dv)))
        delta = fem.solve_spd(jac, -r, tol=_CG_TOL)
        a_new = a_new + delta
        r, u_w, v_w = residual(a_new)
        norm_r = float(np.linalg.norm(r))
        iterations += 1

    new = State(
        t=state.t + dt,
        u=u_pred + du * a_new,
        v=v_pred + dv * a_new,
        a=a_new,
    )
    return new, iterations, norm_r, tol_abs


def _advance(state: State, dt: float, ops, params, depth: int):
    new, iters, res, tol_abs = _solve_substep(state, dt, ops, params)
    if new is not None:
        return new, StepInfo(iterations=iters, residual=res, tol_abs=tol_abs)
    if depth >= _MAX_HALVINGS:
        raise StepFailure(
            f"Newton stalled at t={state.t:.6g} with dt={dt:.3e} after "
            f"{_MAX_HALVINGS} halvings (residual {res:.3e}, "
            f"tolerance {tol_abs:.3e}, {iters} iterations)",
            t=state.t, dt=dt, residual=res, iterations=iters)
    first, info1 = _advance(state, 0.5 * dt, ops, params, depth + 1)
    second, info2 = _advance(first, 0.5 * dt, ops, params, depth + 1)
    return second, StepInfo(
        iterations=info1.iterations + info2.iterations,
        residual=max(info1.residual, info2.residual),
        tol_abs=max(info1.tol_abs, info2.tol_abs),
        substeps=info1.substeps + info2.substeps)


def step(state: State, t_next: float, ops: Operators,
         params: TimeParams):
    """Advance to t_next; on Newton trouble the interval is bisected up
    to five times before StepFailure is raised with diagnostics."""
    dt = t_next - state.t
    if dt <= 0:
        raise ValueError("t_next must exceed the state time")
    new, info = _advance(state, dt, ops, params, depth=0)
    new.t = t_next
    return new, info


def run(ops: Operators, params: TimeParams, u0: np.ndarray, v0: np.ndarray,
        on_step=None):
    """Integrate from 0 to t_end on the uniform grid.

    Returns (states, infos): states include the initial one; infos[k]
    belongs to the transition into states[k+1].  ``on_step(state, info)``
    is invoked for every accepted state (info is None at t = 0), which
    streaming consumers use to flush output before a possible failure.
    """
    u0 = ops.dofmap.zero_constrained(u0)
    v0 = ops.dofmap.zero_constrained(v0)
    a0 = initial_acceleration(ops, u0, v0)
    state = State(0.0, u0, v0, a0)
    fem.check_state(state, ops.dofmap)
    states = [state]
    infos = []
    if on_step is not None:
        on_step(state, None)
    n_steps = max(int(np.ceil(params.t_end / params.dt - 1e-12)), 0)
    for k in range(1, n_steps + 1):
        t_next = min(k * params.dt, params.t_end)
        state, info = step(state, t_next, ops, params)
        states.append(state)
        infos.append(info)
        if on_step is not None:
            on_step(state, info)
    return states, infos
