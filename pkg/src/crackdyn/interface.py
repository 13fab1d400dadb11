"""Regularized crack-face contact and friction terms.

Contact penalizes the negative part of the jump of gamma*u_n + v_n
(normal displacement blended with normal velocity, gamma >= 0); friction
is a Tresca law with bound g, smoothed so the slip direction is
well-defined at zero slip rate.  All laws are monotone with symmetric
positive semidefinite derivatives, which keeps Newton systems SPD.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import exprlang
from .exprlang import Expr

__all__ = [
    "neg_part",
    "psi_eps",
    "beta_eps",
    "dbeta_eps",
    "phi_eps",
    "alpha_eps",
    "dalpha_eps",
    "ContactParams",
    "CrackQuadrature",
    "build_crack_quadrature",
    "jump_eval",
    "split_jump",
    "friction_bound_values",
    "contact_residual",
    "friction_residual",
    "contact_tangent",
    "friction_tangent",
    "recover_tractions",
    "FrictionBoundError",
]

_GAUSS2 = 1.0 / np.sqrt(3.0)


class FrictionBoundError(ValueError):
    """The friction bound g evaluated negative somewhere."""


# ---------------------------------------------------------------------------
# scalar / vector regularizations
# ---------------------------------------------------------------------------

def neg_part(x):
    """[x]_- = max(-x, 0)."""
    return np.maximum(-np.asarray(x, dtype=float), 0.0)


def psi_eps(x, eps):
    """Penalty potential: cubic in the negative part, zero for x >= 0."""
    m = neg_part(x)
    return m * m * m / (3.0 * eps)

def beta_eps(x, eps):
    """d(psi_eps)/dx; nonpositive, monotone nondecreasing, C^1."""
    m = neg_part(x)
    return -(m * m) / eps

def dbeta_eps(x, eps):
    m = neg_part(x)
    return 2.0 * m / eps


def phi_eps(x, eps):
    """Smoothed norm sqrt(|x|^2 + eps^2); x has its components on the
    last axis."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.einsum("...d,...d->...", x, x) + eps * eps)

def alpha_eps(x, eps):
    """Gradient of phi_eps: x / sqrt(|x|^2 + eps^2), magnitude < 1."""
    x = np.asarray(x, dtype=float)
    return x / phi_eps(x, eps)[..., None]

def dalpha_eps(x, eps):
    """Jacobian of alpha_eps: (I - a a^T)/phi, symmetric PSD; equals
    I/eps at x = 0."""
    x = np.asarray(x, dtype=float)
    phi = phi_eps(x, eps)
    a = x / phi[..., None]
    d = x.shape[-1]
    eye = np.eye(d)
    return (eye - np.einsum("...c,...e->...ce", a, a)) / phi[..., None, None]


# ---------------------------------------------------------------------------
# parameters and quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContactParams:
    """Interface law parameters.

    gamma >= 0 blends normal displacement into the contact argument
    (gamma = 0: pure velocity condition); epsilon > 0 is the common
    regularization scale; g is the Tresca bound, an expression in t and
    the crack coordinates, required nonnegative wherever evaluated.
    """

    gamma: float
    epsilon: float
    g: Expr | None = None

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError("gamma must be nonnegative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def delta(self) -> float:
        """Reciprocal of gamma, reported as the law's time constant."""
        return np.inf if self.gamma == 0.0 else 1.0 / self.gamma


class CrackQuadrature:
    """Two-point Gauss rule on every crack facet pair.

    Attributes (npairs = number of pairs, nq = 2 points per facet):
    plus_vertices, minus_vertices : (npairs, 2) aligned vertex indices
    normals : (npairs, dim)
    points : (npairs, nq, dim), weights : (npairs, nq)
    shapes : (nq, 2) P1 basis values at the quadrature points
    """

    def __init__(self, mesh):
        pairs = mesh.crack_pairs
        d = mesh.dim
        n = len(pairs)
        self.dim = d
        self.n_pairs = n
        self.n_vertices = mesh.n_vertices
        self.plus_vertices = np.zeros((n, 2), dtype=np.int64)
        self.minus_vertices = np.zeros((n, 2), dtype=np.int64)
        self.normals = np.zeros((n, d))
        self.points = np.zeros((n, 2, d))
        self.weights = np.zeros((n, 2))
        self.shapes = 0.5 * np.array([[1.0 + _GAUSS2, 1.0 - _GAUSS2],
                                      [1.0 - _GAUSS2, 1.0 + _GAUSS2]]).T
        for k, pair in enumerate(pairs):
            self.plus_vertices[k] = pair.plus
            self.minus_vertices[k] = pair.minus
            self.normals[k] = pair.normal
            a = mesh.vertices[pair.plus[0]]
            b = mesh.vertices[pair.plus[1]]
            mid = 0.5 * (a + b)
            half = 0.5 * (b - a)
            self.points[k, 0] = mid - _GAUSS2 * half
            self.points[k, 1] = mid + _GAUSS2 * half
            self.weights[k] = np.linalg.norm(b - a)
        self.weights *= 0.5

    @property
    def total_measure(self) -> float:
        return float(self.weights.sum())


def build_crack_quadrature(mesh) -> CrackQuadrature:
    return CrackQuadrature(mesh)


# ---------------------------------------------------------------------------
# jumps
# ---------------------------------------------------------------------------

def jump_eval(w: np.ndarray, quad: CrackQuadrature) -> np.ndarray:
    """Jump (plus trace minus minus trace) of a nodal field at the
    quadrature points, shape (npairs, nq, dim)."""
    wn = w.reshape(quad.n_vertices, quad.dim)
    diff = wn[quad.plus_vertices] - wn[quad.minus_vertices]   # (n, 2, d)
    return np.einsum("qi,pid->pqd", quad.shapes, diff)


def split_jump(jumps: np.ndarray, quad: CrackQuadrature):
    """Normal component and tangential part of per-point jump values."""
    jn = np.einsum("pqd,pd->pq", jumps, quad.normals)
    jt = jumps - jn[:, :, None] * quad.normals[:, None, :]
    return jn, jt


def _normal_jump(w, quad):
    return np.einsum("qi,pid,pd->pq", quad.shapes,
                     w.reshape(quad.n_vertices, quad.dim)[quad.plus_vertices]
                     - w.reshape(quad.n_vertices, quad.dim)[quad.minus_vertices],
                     quad.normals)


def friction_bound_values(params: ContactParams, quad: CrackQuadrature,
                          t: float) -> np.ndarray:
    """g at every quadrature point; aborts if any sample is negative."""
    if params.g is None:
        return np.zeros((quad.n_pairs, 2))
    xq = quad.points[..., 0]
    yq = quad.points[..., 1]
    vals = np.broadcast_to(
        np.asarray(exprlang.evaluate(params.g, t, (xq, yq)), dtype=float),
        xq.shape).copy()
    if np.any(vals < 0.0):
        bad = np.unravel_index(int(np.argmin(vals)), vals.shape)
        raise FrictionBoundError(
            f"friction bound g is negative ({vals[bad]:.6g}) at "
            f"t={t:.6g}, point {quad.points[bad]}")
    return vals


# ---------------------------------------------------------------------------
# residual contributions (assembled nodal force vectors)
# ---------------------------------------------------------------------------

def _scatter_interface(quad, vecs):
    """Accumulate per-pair nodal vectors (npairs, 2, d) with opposite
    signs on the two crack faces; returns a flat dof vector."""
    out = np.zeros((quad.n_vertices, quad.dim))
    np.add.at(out, quad.plus_vertices, vecs)
    np.subtract.at(out, quad.minus_vertices, vecs)
    return out.ravel()


def contact_residual(u, v, params: ContactParams, quad: CrackQuadrature):
    """Nodal forces of the contact term.

    Tested against w, the result equals the crack integral of
    beta_eps(jump(gamma*u_n + v_n)) * jump(w_n).
    """
    if quad.n_pairs == 0:
        return np.zeros(quad.n_vertices * quad.dim)
    s = params.gamma * _normal_jump(u, quad) + _normal_jump(v, quad)
    vals = beta_eps(s, params.epsilon) * quad.weights          # (n, q)
    coef = np.einsum("pq,qi->pi", vals, quad.shapes)           # (n, 2)
    vecs = coef[:, :, None] * quad.normals[:, None, :]
    return _scatter_interface(quad, vecs)


def friction_residual(v, t, params: ContactParams, quad: CrackQuadrature):
    """Nodal forces of the smoothed Tresca term: g * alpha_eps of the
    tangential velocity jump, tested against tangential jumps."""
    if quad.n_pairs == 0 or params.g is None:
        return np.zeros(quad.n_vertices * quad.dim)
    g = friction_bound_values(params, quad, t)
    _, jt = split_jump(jump_eval(v, quad), quad)
    a = alpha_eps(jt, params.epsilon)
    vals = g * quad.weights
    vecs = np.einsum("pq,qi,pqd->pid", vals, quad.shapes, a)
    return _scatter_interface(quad, vecs)


# ---------------------------------------------------------------------------
# tangents (derivatives with respect to the Newton unknown)
# ---------------------------------------------------------------------------

def _interface_matrix(quad, blocks):
    """Assemble CSR from per-point dense blocks (npairs, nq, d, d).

    The block at point q couples the four facet vertices with signs
    (+, +, -, -) for (plus0, plus1, minus0, minus1).
    """
    n, d = quad.n_pairs, quad.dim
    verts = np.concatenate([quad.plus_vertices, quad.minus_vertices], axis=1)  # (n, 4)
    signs = np.array([1.0, 1.0, -1.0, -1.0])
    shp = np.concatenate([quad.shapes, quad.shapes], axis=1) * signs           # (q, 4)
    coef = np.einsum("qk,ql,pqce->pklce", shp, shp, blocks)
    dofs = verts[:, :, None] * d + np.arange(d)[None, None, :]                 # (n, 4, d)
    rows = np.repeat(dofs.reshape(n, 4 * d), 4 * d, axis=1).ravel()
    cols = np.tile(dofs.reshape(n, 4 * d), (1, 4 * d)).ravel()
    vals = coef.transpose(0, 1, 3, 2, 4).reshape(n, 4 * d, 4 * d).reshape(n, -1).ravel()
    ndof = quad.n_vertices * d
    return sp.coo_matrix((vals, (rows, cols)), shape=(ndof, ndof)).tocsr()


def contact_tangent(u, v, params: ContactParams, quad: CrackQuadrature,
                    coeff_u: float, coeff_v: float) -> sp.csr_matrix:
    """Derivative of contact_residual along a direction z entering the
    arguments as u + coeff_u*z, v + coeff_v*z.  Symmetric PSD."""
    ndof = quad.n_vertices * quad.dim
    if quad.n_pairs == 0:
        return sp.csr_matrix((ndof, ndof))
    s = params.gamma * _normal_jump(u, quad) + _normal_jump(v, quad)
    chain = params.gamma * coeff_u + coeff_v
    dvals = dbeta_eps(s, params.epsilon) * chain * quad.weights     # (n, q)
    nn = np.einsum("pc,pe->pce", quad.normals, quad.normals)
    blocks = dvals[:, :, None, None] * nn[:, None, :, :]
    return _interface_matrix(quad, blocks)


def friction_tangent(v, t, params: ContactParams, quad: CrackQuadrature,
                     coeff_v: float) -> sp.csr_matrix:
    """Derivative of friction_residual along v + coeff_v*z.  Symmetric
    PSD; at zero slip it is the tangential projector divided by eps."""
    ndof = quad.n_vertices * quad.dim
    if quad.n_pairs == 0 or params.g is None:
        return sp.csr_matrix((ndof, ndof))
    g = friction_bound_values(params, quad, t)
    _, jt = split_jump(jump_eval(v, quad), quad)
    da = dalpha_eps(jt, params.epsilon)                              # (n, q, d, d)
    proj = np.eye(quad.dim)[None] - np.einsum(
        "pc,pe->pce", quad.normals, quad.normals)                    # (n, d, d)
    pd = np.einsum("pcf,pqfh,phe->pqce", proj, da, proj)
    blocks = (coeff_v * g * quad.weights)[:, :, None, None] * pd
    return _interface_matrix(quad, blocks)


# ---------------------------------------------------------------------------
# traction recovery
# ---------------------------------------------------------------------------

def recover_tractions(u, v, t, params: ContactParams, quad: CrackQuadrature):
    """Interface tractions at the quadrature points.

    Returns (sigma_n, sigma_t): the normal traction (always <= 0) and the
    tangential traction vector (always |sigma_t| <= g).
    """
    s = params.gamma * _normal_jump(u, quad) + _normal_jump(v, quad)
    sigma_n = beta_eps(s, params.epsilon)
    _, jt = split_jump(jump_eval(v, quad), quad)
    if params.g is None:
        sigma_t = np.zeros_like(jt)
    else:
        g = friction_bound_values(params, quad, t)
        sigma_t = g[..., None] * alpha_eps(jt, params.epsilon)
    return sigma_n, sigma_t
