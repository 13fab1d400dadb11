import numpy as np
import pytest
import scipy.sparse as sp

from crackdyn import exprlang as ex
from crackdyn import fem
from crackdyn.fem import DofMap, Material, State
from crackdyn.meshing import CrackedMesh, SIDE_PLUS, generate_rect_crack


def single_triangle():
    return CrackedMesh(2, [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], [(0, 1, 2)],
                       [SIDE_PLUS], [(0, 1)], np.zeros((0, 2), dtype=np.int64),
                       ())


def retag_top_neumann(mesh, height):
    """Move all boundary facets except the top edge into the Dirichlet set."""
    facets = np.vstack([mesh.dirichlet_facets, mesh.neumann_facets])
    ys = mesh.vertices[:, 1]
    on_top = np.all(np.isclose(ys[facets], height), axis=1)
    return CrackedMesh(2, mesh.vertices, mesh.cells, mesh.cell_sides,
                       facets[~on_top], facets[on_top], mesh.crack_pairs)


def test_material_validation():
    Material(lam=1.0, mu=1.0, rho=1.0)
    Material(lam=-0.5, mu=1.0, rho=1.0)  # negative lambda can still be admissible
    with pytest.raises(ValueError):
        Material(lam=1.0, mu=0.0, rho=1.0)
    with pytest.raises(ValueError):
        Material(lam=-1.0, mu=1.0, rho=1.0)  # 3*lam + 2*mu <= 0
    with pytest.raises(ValueError):
        Material(lam=1.0, mu=1.0, rho=0.0)


def test_unit_triangle_mass_block():
    mesh = single_triangle()
    m = fem.assemble_mass(mesh, Material(lam=1.0, mu=1.0, rho=1.0)).toarray()
    block = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 24.0
    assert np.allclose(m[0::2, 0::2], block, rtol=0, atol=1e-15)
    assert np.allclose(m[1::2, 1::2], block, rtol=0, atol=1e-15)
    assert np.allclose(m[0::2, 1::2], 0.0)


def test_mass_row_sums_and_rho_scaling():
    mesh = generate_rect_crack(2.0, 1.0, 8, 4, crack_span=(0.25, 0.75))
    m1 = fem.assemble_mass(mesh, Material(lam=1.0, mu=1.0, rho=1.0))
    m3 = fem.assemble_mass(mesh, Material(lam=1.0, mu=1.0, rho=3.0))
    # sum over everything = rho * |Omega| * dim
    assert np.isclose(m1.sum(), 2.0 * 2)
    assert np.allclose((m3 - 3.0 * m1).toarray(), 0.0, atol=1e-15)


def test_stiffness_kills_rigid_modes():
    mesh = generate_rect_crack(2.0, 1.0, 8, 4)
    mat = Material(lam=1.3, mu=0.7, rho=1.0)
    k = fem.assemble_stiffness(mesh, mat)
    scale = abs(k).max()
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    modes = [
        np.tile([1.0, 0.0], mesh.n_vertices),
        np.tile([0.0, 1.0], mesh.n_vertices),
        np.column_stack([-y, x]).ravel(),
    ]
    for w in modes:
        assert np.abs(k @ w).max() <= 1e-12 * scale * max(1.0, np.abs(w).max())


def test_uniaxial_patch_test():
    # nodal u = (alpha*x, 0) must reproduce the constant plane-strain stress
    # exactly on every cell
    mesh = generate_rect_crack(2.0, 1.0, 4, 2)
    mat = Material(lam=1.3, mu=0.9, rho=1.0)
    alpha = 0.01
    u = np.column_stack([alpha * mesh.vertices[:, 0],
                         np.zeros(mesh.n_vertices)]).ravel()
    sig = fem.cell_stresses(mesh, mat, u)
    assert np.allclose(sig[:, 0, 0], (mat.lam + 2 * mat.mu) * alpha, rtol=1e-10)
    assert np.allclose(sig[:, 1, 1], mat.lam * alpha, rtol=1e-10)
    assert np.abs(sig[:, 0, 1]).max() <= 1e-14
    assert np.allclose(sig[:, 1, 0], sig[:, 0, 1])


def test_bilinear_form_symmetry():
    mesh = generate_rect_crack(2.0, 1.0, 6, 4, crack_span=(0.25, 0.75))
    k = fem.assemble_stiffness(mesh, Material(lam=2.0, mu=0.5, rho=1.0))
    rng = np.random.default_rng(3)
    for _ in range(5):
        v = rng.standard_normal(k.shape[0])
        w = rng.standard_normal(k.shape[0])
        a_vw = v @ (k @ w)
        a_wv = w @ (k @ v)
        assert abs(a_vw - a_wv) <= 1e-13 * max(abs(a_vw), 1.0)


def test_stiffness_coercive_on_free_dofs():
    mesh = generate_rect_crack(2.0, 1.0, 4, 2)
    dofmap = DofMap(mesh)
    k = fem.assemble_stiffness(mesh, Material(lam=1.0, mu=1.0, rho=1.0))
    free = ~dofmap.constrained
    kff = k.toarray()[np.ix_(free, free)]
    assert np.linalg.eigvalsh(kff).min() > 0.0


def test_load_constant_body_force():
    mesh = generate_rect_crack(2.0, 1.0, 4, 2, crack_span=(0.25, 0.75))
    mat = Material(lam=1.0, mu=1.0, rho=2.5)
    c = (0.7, -1.2)
    f = (ex.parse("0.7"), ex.parse("-1.2"))
    load = fem.assemble_load(mesh, mat, f=f)
    const = np.tile(c, mesh.n_vertices)
    mass = fem.assemble_mass(mesh, mat)
    # for a constant integrand both quadratures are exact: load = M c
    assert np.allclose(load, mass @ const, rtol=1e-13, atol=1e-15)
    assert np.isclose(load.reshape(-1, 2)[:, 1].sum(), mat.rho * 2.0 * c[1])


def test_load_top_edge_traction():
    mesh = retag_top_neumann(generate_rect_crack(2.0, 1.0, 4, 2), 1.0)
    mat = Material(lam=1.0, mu=1.0, rho=1.0)
    p = 0.3
    load = fem.assemble_load(mesh, mat, trac=(ex.parse("0"), ex.parse("-0.3")))
    totals = load.reshape(-1, 2).sum(axis=0)
    assert np.isclose(totals[0], 0.0, atol=1e-15)
    assert np.isclose(totals[1], -p * 2.0)  # -p times the top edge length
    # only top-edge vertices are loaded
    loaded = np.nonzero(np.abs(load.reshape(-1, 2)[:, 1]) > 0)[0]
    assert np.allclose(mesh.vertices[loaded, 1], 1.0)


def test_load_zero_when_no_data():
    mesh = generate_rect_crack(1.0, 1.0, 2, 2)
    load = fem.assemble_load(mesh, Material(lam=1.0, mu=1.0, rho=1.0))
    assert not load.any()


def test_load_time_dependent():
    mesh = generate_rect_crack(1.0, 1.0, 2, 2)
    mat = Material(lam=1.0, mu=1.0, rho=1.0)
    f = (ex.parse("t*x"), ex.parse("0"))
    l1 = fem.assemble_load(mesh, mat, f=f, t=1.0)
    l2 = fem.assemble_load(mesh, mat, f=f, t=2.0)
    assert np.allclose(l2, 2.0 * l1)


def test_interpolate_matches_expressions():
    mesh = generate_rect_crack(2.0, 1.0, 4, 2)
    w = fem.interpolate(mesh, (ex.parse("x + 2*y"), ex.parse("x*y"))).reshape(-1, 2)
    assert np.allclose(w[:, 0], mesh.vertices[:, 0] + 2 * mesh.vertices[:, 1])
    assert np.allclose(w[:, 1], mesh.vertices[:, 0] * mesh.vertices[:, 1])


def test_dofmap_partition():
    mesh = generate_rect_crack(2.0, 1.0, 4, 2, crack_span=(0.25, 0.75))
    dofmap = DofMap(mesh)
    assert dofmap.ndof == 2 * mesh.n_vertices
    dirichlet_verts = set(mesh.dirichlet_facets.ravel().tolist())
    for v in range(mesh.n_vertices):
        expected = v in dirichlet_verts
        assert bool(dofmap.constrained[2 * v]) == expected
        assert bool(dofmap.constrained[2 * v + 1]) == expected
    w = np.ones(dofmap.ndof)
    z = dofmap.zero_constrained(w)
    assert not z[dofmap.constrained].any()
    assert z[~dofmap.constrained].all()


def test_check_state():
    mesh = generate_rect_crack(1.0, 1.0, 2, 2)
    dofmap = DofMap(mesh)
    zero = np.zeros(dofmap.ndof)
    fem.check_state(State(0.0, zero, zero, zero), dofmap)
    bad = zero.copy()
    bad[np.nonzero(dofmap.constrained)[0][0]] = 1.0
    with pytest.raises(ValueError, match="Dirichlet"):
        fem.check_state(State(0.0, bad, zero, zero), dofmap)
    with pytest.raises(ValueError, match="length"):
        fem.check_state(State(0.0, zero[:-1], zero, zero), dofmap)


def test_apply_dirichlet_pins_rows():
    mesh = generate_rect_crack(1.0, 1.0, 2, 2)
    dofmap = DofMap(mesh)
    k = fem.assemble_stiffness(mesh, Material(lam=1.0, mu=1.0, rho=1.0))
    kp = fem.apply_dirichlet(k, dofmap.constrained).toarray()
    idx = np.nonzero(dofmap.constrained)[0]
    for i in idx:
        row = kp[i].copy()
        row[i] -= 1.0
        assert not row.any()
        col = kp[:, i].copy()
        col[i] -= 1.0
        assert not col.any()


def test_solve_spd_identity_and_dense_oracle():
    assert np.array_equal(fem.solve_spd(sp.eye(4, format="csr"),
                                        np.zeros(4)), np.zeros(4))
    rng = np.random.default_rng(11)
    r = rng.standard_normal((10, 10))
    a = r.T @ r + 10 * np.eye(10)
    b = rng.standard_normal(10)
    x = fem.solve_spd(sp.csr_matrix(a), b)
    assert np.allclose(x, np.linalg.solve(a, b), rtol=0, atol=1e-10)


def test_solve_spd_reports_failure():
    rng = np.random.default_rng(5)
    r = rng.standard_normal((30, 30))
    a = sp.csr_matrix(r.T @ r + 1e-6 * np.eye(30))
    with pytest.raises(fem.SolveError) as err:
        fem.solve_spd(a, rng.standard_normal(30), maxit=1)
    assert np.isfinite(err.value.residual)


def test_assembly_is_deterministic():
    mesh = generate_rect_crack(2.0, 1.0, 8, 4, crack_span=(0.25, 0.75))
    mat = Material(lam=1.0, mu=1.0, rho=1.0)
    k1 = fem.assemble_stiffness(mesh, mat)
    k2 = fem.assemble_stiffness(mesh, mat)
    assert np.array_equal(k1.data, k2.data)
    assert np.array_equal(k1.indices, k2.indices)
    m1 = fem.assemble_mass(mesh, mat)
    m2 = fem.assemble_mass(mesh, mat)
    assert np.array_equal(m1.data, m2.data)


def test_inverted_cell_rejected():
    mesh = CrackedMesh(2, [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], [(0, 2, 1)],
                       [SIDE_PLUS], [(0, 1)], np.zeros((0, 2), dtype=np.int64),
                       ())
    with pytest.raises(fem.AssemblyError, match="area"):
        fem.assemble_mass(mesh, Material(lam=1.0, mu=1.0, rho=1.0))


def test_norms():
    mesh = generate_rect_crack(1.0, 1.0, 2, 2)
    mat = Material(lam=1.0, mu=1.0, rho=4.0)
    mass = fem.assemble_mass(mesh, mat)
    stiff = fem.assemble_stiffness(mesh, mat)
    rng = np.random.default_rng(2)
    w = rng.standard_normal(mass.shape[0])
    assert np.isclose(fem.h_norm_sq(mass, mat.rho, w), (w @ (mass @ w)) / 4.0)
    assert np.isclose(fem.v_norm_sq(stiff, w), w @ (stiff @ w))
    assert fem.h_norm_sq(mass, mat.rho, w) > 0
