import numpy as np
import pytest

from shellbench.element import (
    DISP4,
    MITC4C,
    MITC4S,
    MEMBRANE_SAMPLES,
    SHEAR_SAMPLES,
    Formulation,
    Material,
    Reduction,
    element_load,
    element_stiffness,
    line_load_from_vectors,
    project_membrane,
    project_shear,
    stabilized_shear_modulus,
    strain_operators,
    surface_load_from_vector,
)
from shellbench.errors import InvalidArgumentError
from shellbench.geometry import GAUSS_POINTS, nodal_dof_transform, nodal_frames, shape_functions, straighten_element
from shellbench.mesh import generate_quarter_cap_regular

ALL = [DISP4, MITC4C, MITC4S, Formulation(Reduction.SHEAR, 0.2), Formulation(Reduction.SHEAR_AND_MEMBRANE, 0.2)]
STEEL = Material(E=200e9, nu=0.3, t=0.01)


def flat_quad(distorted=True):
    if distorted:
        x = np.array([[0.0, 0.0], [2.0, 0.3], [2.4, 1.8], [0.2, 1.4]])
    else:
        x = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 1.0]])
    return straighten_element(np.column_stack([x, np.zeros(4)]))


# --- strain oracle: finite differences of the interpolated fields -----------


def fd_strains(geom, b, dofs, xi, eta, h=1e-6):
    d = dofs.reshape(4, 5)

    def fields(x, y):
        n, _ = shape_functions(x, y)
        return n @ d, n @ geom.xy

    def dref(k):
        dp = np.eye(2)[k] * h
        (fp, xp), (fm, xm) = fields(xi + dp[0], eta + dp[1]), fields(xi - dp[0], eta - dp[1])
        return (fp - fm) / (2 * h), (xp - xm) / (2 * h)

    (f_xi, x_xi), (f_eta, x_eta) = dref(0), dref(1)
    J = np.column_stack([x_xi, x_eta])
    grad = np.linalg.solve(J.T, np.vstack([f_xi, f_eta]))  # rows d/dx, d/dy of (u1,u2,w,t1,t2)
    f, _ = fields(xi, eta)
    u, w, th = f[:2], f[2], f[3:]
    du, dw, dth = grad[:, :2].T, grad[:, 2], grad[:, 3:].T  # du[a, b] = u_a,b
    eps = 0.5 * (du + du.T) - b * w
    gam = th + b.T @ u + dw
    b11, b12, b22 = b[0, 0], b[0, 1], b[1, 1]
    k11 = dth[0, 0] + b12 * (b12 * w - du[1, 0])
    k22 = dth[1, 1] + b12 * (b12 * w - du[0, 1])
    k12 = 0.5 * (dth[0, 1] + dth[1, 0] + b11 * (b12 * w - du[0, 1]) + b22 * (b12 * w - du[1, 0]))
    return np.array([eps[0, 0], eps[1, 1], eps[0, 1]]), np.array([k11, k22, k12]), gam


@pytest.mark.parametrize("point", [(0.3, -0.6), (-0.8, 0.1), (0.0, 0.0)])
def test_strain_operators_match_finite_difference_oracle(rng, point):
    geom = flat_quad()
    b = np.array([[0.11, 0.04], [0.04, -0.07]])
    dofs = rng.normal(size=20)
    ops = strain_operators(geom, b, *point)
    e, k, g = fd_strains(geom, b, dofs, *point)
    assert np.allclose(ops.membrane @ dofs, e, atol=1e-7)
    assert np.allclose(ops.bending @ dofs, k, atol=1e-7)
    assert np.allclose(ops.shear @ dofs, g, atol=1e-7)


# --- material and stabilization ----------------------------------------------


def test_constitutive_matrices():
    m = Material(E=1.0, nu=0.0, t=2.0)
    assert np.allclose(m.membrane_matrix(), np.diag([2.0, 2.0, 4.0]))
    assert np.allclose(m.bending_matrix(), m.membrane_matrix() * 4.0 / 12.0)


def test_stabilized_shear_modulus_examples():
    m = Material(E=20.59e9, nu=0.0, t=0.06)
    assert stabilized_shear_modulus(m, 1.0, 0.2) / m.G == pytest.approx(0.0036 / 0.2036, rel=1e-12)
    assert stabilized_shear_modulus(m, 0.06 / np.sqrt(0.2), 0.2) == pytest.approx(m.G / 2)
    assert stabilized_shear_modulus(m, 1.0, None) == m.G
    with pytest.raises(InvalidArgumentError):
        stabilized_shear_modulus(m, 1.0, -0.1)


def test_formulation_names():
    assert Formulation.from_name("MITC4S").reduction is Reduction.SHEAR_AND_MEMBRANE
    assert Formulation.from_name("mitc4c", 0.2).key == "mitc4c+stab0.2"
    with pytest.raises(InvalidArgumentError):
        Formulation.from_name("q9")
    with pytest.raises(InvalidArgumentError):
        Formulation(Reduction.SHEAR, 0.0)


# --- projectors --------------------------------------------------------------


def covariant_shear_field(geom, coeffs):
    a, b, c, d = coeffs

    def s(xi, eta):
        return np.linalg.solve(geom.jacobian(xi, eta).T, [a + b * eta, c + d * xi])

    return s


def test_shear_projection_reproduces_its_space(rng):
    geom = flat_quad()
    s = covariant_shear_field(geom, rng.normal(size=4))
    samples = np.stack([s(*p) for p in SHEAR_SAMPLES])[..., None]
    for xi, eta in GAUSS_POINTS + [(0.4, 0.9)]:
        assert np.allclose(project_shear(samples, geom, xi, eta)[:, 0], s(xi, eta), atol=1e-12)


def test_shear_projection_preserves_constants_and_is_idempotent(rng):
    geom = flat_quad()
    const = rng.normal(size=2)
    samples = np.tile(const[:, None], (8, 1, 1))
    assert np.allclose(project_shear(samples, geom, 0.2, -0.3)[:, 0], const, atol=1e-12)
    raw = rng.normal(size=(8, 2, 3))
    once = np.stack([project_shear(raw, geom, *p) for p in SHEAR_SAMPLES])
    twice = np.stack([project_shear(once, geom, *p) for p in SHEAR_SAMPLES])
    assert np.allclose(once, twice, atol=1e-12)


def test_shear_projection_keeps_edge_integrals(rng):
    # quadrature oracle: 5-point Gauss along each reference edge
    geom = flat_quad()
    C = rng.normal(size=(2, 6))

    def field(xi, eta):
        return C @ [1, xi, eta, xi * eta, xi**2, eta**2]

    samples = np.stack([field(*p) for p in SHEAR_SAMPLES])[..., None]
    xg, wg = np.polynomial.legendre.leggauss(5)
    edges = [(lambda u: (u, -1.0), 0), (lambda u: (1.0, u), 1), (lambda u: (u, 1.0), 0), (lambda u: (-1.0, u), 1)]
    for pt, col in edges:
        exact = sum(w * geom.jacobian(*pt(u))[:, col] @ field(*pt(u)) for u, w in zip(xg, wg))
        proj = sum(w * geom.jacobian(*pt(u))[:, col] @ project_shear(samples, geom, *pt(u))[:, 0] for u, w in zip(xg, wg))
        assert proj == pytest.approx(exact, abs=1e-12)


def test_membrane_projection_preserves_constants_and_is_idempotent(rng):
    geom = flat_quad()
    const = rng.normal(size=3)
    samples = np.tile(const[:, None], (12, 1, 1))
    for p in GAUSS_POINTS:
        assert np.allclose(project_membrane(samples, geom, *p)[:, 0], const, atol=1e-12)
    raw = rng.normal(size=(12, 3, 2))
    once = np.stack([project_membrane(raw, geom, *p) for p in MEMBRANE_SAMPLES])
    twice = np.stack([project_membrane(once, geom, *p) for p in MEMBRANE_SAMPLES])
    assert np.allclose(once, twice, atol=1e-12)


def test_membrane_projection_reproduces_its_space(rng):
    geom = flat_quad()
    a, b, c, d, e = rng.normal(size=5)
    G = np.linalg.inv(geom.jbar)

    def field(xi, eta):
        tau = np.array([[a + b * eta, c], [c, d + e * xi]])
        eps = G.T @ tau @ G
        return np.array([eps[0, 0], eps[1, 1], eps[0, 1]])

    samples = np.stack([field(*p) for p in MEMBRANE_SAMPLES])[..., None]
    for p in GAUSS_POINTS + [(0.7, -0.2)]:
        assert np.allclose(project_membrane(samples, geom, *p)[:, 0], field(*p), atol=1e-12)


# --- stiffness ---------------------------------------------------------------


@pytest.mark.parametrize("form", ALL, ids=lambda f: f.key)
def test_stiffness_symmetric_psd(form):
    mesh = generate_quarter_cap_regular(4)
    conn = mesh.elements
    K = element_stiffness(form, straighten_element(mesh.positions[conn]), mesh.normals[conn], STEEL)
    scale = np.abs(K).max(axis=(1, 2))
    assert np.abs(K - K.swapaxes(1, 2)).max(axis=(1, 2)).max() / scale.max() <= 1e-10
    ev = np.linalg.eigvalsh(K)
    assert np.all(ev.min(axis=1) >= -1e-9 * ev.max(axis=1))


@pytest.mark.parametrize("form", ALL, ids=lambda f: f.key)
@pytest.mark.parametrize("distorted", [False, True])
def test_flat_element_has_six_rigid_modes(form, distorted):
    geom = flat_quad(distorted)
    normals = np.tile([0.0, 0.0, 1.0], (4, 1))
    K = element_stiffness(form, geom, normals, STEEL)
    ev = np.linalg.eigvalsh(K)
    zero = np.abs(ev) <= 1e-9 * ev.max()
    assert zero.sum() == 6
    assert np.linalg.matrix_rank(K, tol=1e-9 * ev.max()) == 14


def test_flat_rigid_tilt_is_zero_energy():
    geom = flat_quad()
    normals = np.tile([0.0, 0.0, 1.0], (4, 1))
    K = element_stiffness(DISP4, geom, normals, STEEL)
    # w = a x + c y, theta = -grad w
    a, c = 0.3, -0.2
    d = np.zeros((4, 5))
    d[:, 2] = a * geom.xy[:, 0] + c * geom.xy[:, 1]
    d[:, 3], d[:, 4] = -a, -c
    d = d.ravel()
    assert d @ K @ d <= 1e-12 * np.abs(K).max() * (d @ d)


def test_rigid_translation_energy_decays_on_sphere():
    # a vertical translation written in nodal dofs is a rigid mode only up to
    # the shallow-shell approximation
    energies = []
    for n in (4, 8, 16):
        mesh = generate_quarter_cap_regular(n)
        conn = mesh.elements[:1]
        geom = straighten_element(mesh.positions[conn])
        K = element_stiffness(MITC4C, geom, mesh.normals[conn], STEEL)[0]
        frames = nodal_frames(mesh.normals[conn[0]])
        nodal = np.zeros((4, 5))
        nodal[:, :3] = frames @ np.array([0.0, 0.0, 1.0])
        T = nodal_dof_transform(geom.frame[0][None], frames)
        d = np.einsum("aij,aj->ai", T, nodal).ravel()
        energies.append(d @ K @ d / (np.abs(K).max() * d @ d))
    assert energies[0] > 3 * energies[1] > 9 * energies[2]


# --- loads ---------------------------------------------------------------------


def test_gravity_on_horizontal_element_is_pure_pressure():
    geom = flat_quad(False)
    s = surface_load_from_vector(geom, np.array([0.0, 0.0, -9.0]))
    assert s[0] == pytest.approx(0.0) and s[1] == pytest.approx(0.0)
    f = element_load(geom, surface=s).reshape(4, 5)
    assert f[:, 2].sum() == pytest.approx(-9.0 * 2.0)
    assert np.allclose(f[:, [0, 1, 3, 4]], 0.0)


def test_edge_moment_resultant():
    geom = flat_quad(False)
    values = line_load_from_vectors(geom.frame, np.zeros(3), np.array([0.0, 1.0, 0.0]))
    f = element_load(geom, edges=[(0, values)]).reshape(4, 5)
    # moment about i2 works on theta along -(i2 x i3) = -i1 ... total |tau| = L
    assert np.abs(f[:, 3:].sum(axis=0)).sum() == pytest.approx(2.0)
