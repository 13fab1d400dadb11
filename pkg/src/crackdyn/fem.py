"""P1 vector finite elements for linear elasticity on cracked meshes.

Plane-strain convention in 2D: the Lamé parameters are used as given,
with stress sigma(u) = lam*div(u)*I + 2*mu*sym(grad u).  The bilinear
form is a(u, v) = lam*(div u, div v) + 2*mu*(E(u), E(v)); the V-norm is
induced by the stiffness matrix and the H-norm by the mass matrix
divided by the density.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import exprlang

__all__ = [
    "AssemblyError",
    "SolveError",
    "Material",
    "DofMap",
    "State",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_load",
    "cell_stresses",
    "apply_dirichlet",
    "solve_spd",
    "interpolate",
    "h_norm_sq",
    "v_norm_sq",
]

_GAUSS2 = 1.0 / np.sqrt(3.0)


class AssemblyError(ValueError):
    pass


class SolveError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class Material:
    """Homogeneous isotropic material: Lamé parameters and density."""

    lam: float
    mu: float
    rho: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not 3.0 * self.lam + 2.0 * self.mu > 0:
            raise ValueError("3*lam + 2*mu must be positive")
        if not self.rho > 0:
            raise ValueError("rho must be positive")


class DofMap:
    """Vertex-blocked degrees of freedom: dof = vertex*dim + component.

    Dirichlet facet vertices contribute constrained dofs (all components).
    """

    def __init__(self, mesh):
        self.dim = mesh.dim
        self.n_vertices = mesh.n_vertices
        self.ndof = mesh.n_vertices * mesh.dim
        constrained_vertices = np.unique(mesh.dirichlet_facets.ravel())
        mask = np.zeros(self.ndof, dtype=bool)
        for c in range(self.dim):
            mask[constrained_vertices * self.dim + c] = True
        self.constrained = mask
        self.free = ~mask

    def vertex_dofs(self, v: int) -> np.ndarray:
        return np.arange(v * self.dim, (v + 1) * self.dim)

    def zero_constrained(self, w: np.ndarray) -> np.ndarray:
        w = np.array(w, dtype=float, copy=True)
        w[self.constrained] = 0.0
        return w


@dataclass
class State:
    """Trajectory sample: displacement, velocity, acceleration at time t."""

    t: float
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray

    def copy(self) -> "State":
        return State(self.t, self.u.copy(), self.v.copy(), self.a.copy())


def check_state(state: State, dofmap: DofMap) -> None:
    """Constrained dofs of u, v, a must be exactly zero."""
    for name in ("u", "v", "a"):
        w = getattr(state, name)
        if w.shape != (dofmap.ndof,):
            raise ValueError(f"state.{name} has wrong length")
        if np.any(w[dofmap.constrained] != 0.0):
            raise ValueError(f"state.{name} is nonzero on Dirichlet dofs")


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def _cell_geometry(mesh):
    """Areas and P1 basis gradients; raises on non-positive cell area."""
    coords = mesh.vertices[mesh.cells]            # (nc, 3, 2)
    e1 = coords[:, 1] - coords[:, 0]
    e2 = coords[:, 2] - coords[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    bad = np.nonzero(det <= 0)[0]
    if bad.size:
        raise AssemblyError(f"cell {bad[0]} has non-positive area")
    area = 0.5 * det
    grads = np.empty((mesh.n_cells, 3, 2))
    grads[:, 1, 0] = e2[:, 1] / det
    grads[:, 1, 1] = -e2[:, 0] / det
    grads[:, 2, 0] = -e1[:, 1] / det
    grads[:, 2, 1] = e1[:, 0] / det
    grads[:, 0] = -grads[:, 1] - grads[:, 2]
    return coords, area, grads


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def assemble_mass(mesh, material: Material) -> sp.csr_matrix:
    """Consistent mass matrix scaled by the density (SPD)."""
    _, area, _ = _cell_geometry(mesh)
    nc = mesh.n_cells
    d = mesh.dim
    s = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    block = material.rho * area[:, None, None] * s          # (nc, 3, 3)
    rows = []
    cols = []
    vals = []
    for c in range(d):
        dofs = mesh.cells * d + c                            # (nc, 3)
        rows.append(np.repeat(dofs, 3, axis=1).ravel())
        cols.append(np.tile(dofs, (1, 3)).ravel())
        vals.append(block.transpose(0, 2, 1).reshape(nc, 9).ravel())
    ndof = mesh.n_vertices * d
    m = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ndof, ndof))
    return m.tocsr()


def assemble_stiffness(mesh, material: Material) -> sp.csr_matrix:
    """Stiffness of a(u,v) = lam*(div u, div v) + 2*mu*(E(u), E(v))."""
    _, area, grads = _cell_geometry(mesh)
    nc = mesh.n_cells
    d = mesh.dim
    lam, mu = material.lam, material.mu
    gdot = np.einsum("nid,njd->nij", grads, grads)
    ke = (lam * np.einsum("n,nic,nje->nicje", area, grads, grads)
          + mu * np.einsum("n,nie,njc->nicje", area, grads, grads))
    ke += mu * area[:, None, None, None, None] * (
        gdot[:, :, None, :, None] * np.eye(d)[None, None, :, None, :])
    dofs = (mesh.cells[:, :, None] * d + np.arange(d)[None, None, :]).reshape(nc, 3 * d)
    rows = np.repeat(dofs, 3 * d, axis=1).ravel()
    cols = np.tile(dofs, (1, 3 * d)).ravel()
    vals = ke.reshape(nc, 3 * d, 3 * d).reshape(nc, -1).ravel()
    ndof = mesh.n_vertices * d
    k = sp.coo_matrix((vals, (rows, cols)), shape=(ndof, ndof))
    return k.tocsr()


def assemble_load(mesh, material: Material, f=None, trac=None, t=0.0) -> np.ndarray:
    """Load vector: rho-weighted body force plus Neumann traction.

    ``f`` and ``trac`` are tuples of one expression per component (or
    None for zero).  Cell integrals use the three edge-midpoint points
    (exact for quadratics), facet integrals two-point Gauss.
    """
    d = mesh.dim
    ndof = mesh.n_vertices * d
    out = np.zeros(ndof)

    if f is not None:
        coords, area, _ = _cell_geometry(mesh)
        mids = 0.5 * (coords + np.roll(coords, -1, axis=1))   # (nc, 3, 2): m01, m12, m20
        w = area / 3.0
        xq = mids[:, :, 0].ravel()
        yq = mids[:, :, 1].ravel()
        nodal = np.zeros((mesh.n_vertices, d))
        # basis value at the midpoints: 1/2 on the two adjacent ones
        phi = 0.5 * np.array([[1.0, 0.0, 1.0],
                              [1.0, 1.0, 0.0],
                              [0.0, 1.0, 1.0]])
        for c in range(d):
            fq = np.broadcast_to(
                np.asarray(exprlang.evaluate(f[c], t, (xq, yq)), dtype=float),
                xq.shape).reshape(mesh.n_cells, 3)
            contrib = np.einsum("n,iq,nq->ni", w, phi, fq) * material.rho
            np.add.at(nodal[:, c], mesh.cells.ravel(), contrib.ravel())
        out += nodal.ravel()

    if trac is not None and mesh.neumann_facets.shape[0]:
        facets = mesh.neumann_facets
        pa = mesh.vertices[facets[:, 0]]
        pb = mesh.vertices[facets[:, 1]]
        mid = 0.5 * (pa + pb)
        half = 0.5 * (pb - pa)
        length = 2.0 * np.linalg.norm(half, axis=1)
        pts = np.stack([mid - _GAUSS2 * half, mid + _GAUSS2 * half], axis=1)
        shape = 0.5 * np.array([[1.0 + _GAUSS2, 1.0 - _GAUSS2],
                                [1.0 - _GAUSS2, 1.0 + _GAUSS2]])   # [node, qp]
        wq = 0.5 * length
        nodal = np.zeros((mesh.n_vertices, d))
        xq = pts[:, :, 0].ravel()
        yq = pts[:, :, 1].ravel()
        for c in range(d):
            fq = np.broadcast_to(
                np.asarray(exprlang.evaluate(trac[c], t, (xq, yq)), dtype=float),
                xq.shape).reshape(-1, 2)
            contrib = np.einsum("n,iq,nq->ni", wq, shape, fq)
            np.add.at(nodal[:, c], facets.ravel(), contrib.ravel())
        out += nodal.ravel()

    return out


def cell_stresses(mesh, material: Material, u: np.ndarray) -> np.ndarray:
    """Per-cell constant stress tensors, shape (nc, dim, dim)."""
    _, _, grads = _cell_geometry(mesh)
    d = mesh.dim
    un = u.reshape(mesh.n_vertices, d)[mesh.cells]       # (nc, 3, d)
    h = np.einsum("nia,nib->nab", un, grads)             # grad u
    eps = 0.5 * (h + h.transpose(0, 2, 1))
    tr = np.trace(eps, axis1=1, axis2=2)
    return (material.lam * tr[:, None, None] * np.eye(d)[None]
            + 2.0 * material.mu * eps)


def interpolate(mesh, exprs, t=0.0) -> np.ndarray:
    """Nodal interpolation of a tuple of component expressions."""
    d = mesh.dim
    xs = mesh.vertices[:, 0]
    ys = mesh.vertices[:, 1]
    out = np.zeros((mesh.n_vertices, d))
    for c in range(d):
        if exprs is not None and exprs[c] is not None:
            out[:, c] = np.broadcast_to(
                np.asarray(exprlang.evaluate(exprs[c], t, (xs, ys)), dtype=float),
                xs.shape)
    return out.ravel()


# ---------------------------------------------------------------------------
# boundary conditions and linear solves
# ---------------------------------------------------------------------------

def apply_dirichlet(a: sp.csr_matrix, constrained: np.ndarray) -> sp.csr_matrix:
    """Zero constrained rows and columns and pin their diagonal to one."""
    keep = sp.diags((~constrained).astype(float))
    pin = sp.diags(constrained.astype(float))
    return (keep @ a @ keep + pin).tocsr()


def solve_spd(a, rhs, tol=1e-12, maxit=None):
    """Conjugate gradients with Jacobi preconditioning.

    Deterministic: fixed zero initial guess, no randomized components.
    Returns x with ||a x - rhs|| <= tol * ||rhs||; raises SolveError with
    the achieved residual if maxit iterations do not get there.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.shape[0]
    if maxit is None:
        maxit = max(200, 20 * n)
    norm_b = np.linalg.norm(rhs)
    x = np.zeros(n)
    if norm_b == 0.0:
        return x
    diag = np.asarray(a.diagonal())
    if np.any(diag <= 0):
        raise SolveError("matrix has a non-positive diagonal entry", np.inf)
    r = rhs.copy()
    z = r / diag
    p = z.copy()
    rz = float(r @ z)
    target = tol * norm_b
    for _ in range(maxit):
        if np.linalg.norm(r) <= target:
            return x
        q = a @ p
        pq = float(p @ q)
        if pq <= 0:
            raise SolveError("matrix is not positive definite", float(np.linalg.norm(r)))
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        z = r / diag
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = float(np.linalg.norm(r))
    if res <= target:
        return x
    raise SolveError(
        f"CG did not converge in {maxit} iterations "
        f"(residual {res:.3e}, target {target:.3e})", res)


def h_norm_sq(mass: sp.csr_matrix, rho: float, w: np.ndarray) -> float:
    """Squared L2 norm: the mass matrix carries rho, so divide it out."""
    return float(w @ (mass @ w)) / rho


def v_norm_sq(stiffness: sp.csr_matrix, w: np.ndarray) -> float:
    """Squared energy (stiffness-induced) seminorm."""
    return float(w @ (stiffness @ w))
