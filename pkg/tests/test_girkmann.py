import math
from dataclasses import replace

import numpy as np
import pytest

from shellbench.assembly import Solution
from shellbench.element import DISP4, MITC4C, MITC4S, Formulation, Reduction
from shellbench.errors import BenchmarkError, GeometryError, InvalidArgumentError
from shellbench.girkmann import (
    QUANTITIES,
    RING_REFERENCE,
    SHELL_REFERENCE,
    ComplianceSet,
    GirkmannConstants,
    ReactionResult,
    ShellModel,
    build_mesh,
    compliance_from_solutions,
    convergence_table,
    load_case,
    moment_profile,
    normal_force,
    patch_subdivisions,
    polygon_integral,
    ring_compliance,
    ring_pentagon,
    run_benchmark,
    run_case,
    shell_compliance,
    solve_reactions,
    symmetry_deviation,
)

STAB_C = Formulation(Reduction.SHEAR, 0.2)


@pytest.fixture(scope="module")
def model32():
    return ShellModel(build_mesh(32), STAB_C)


@pytest.fixture(scope="module")
def cases32(model32):
    return model32.solve_cases([1, 2, 3])


# --- constants and loads ------------------------------------------------------


def test_normal_force(constants):
    assert constants.g == pytest.approx(1961.4, rel=1e-12)
    assert constants.r0 == pytest.approx(23.3359, abs=1e-4)
    assert normal_force(constants) == pytest.approx(-2.5918e4, rel=1e-4)
    flat = replace(constants, alpha=1e-9, rho0=1e-9 * 23.3359)
    assert normal_force(flat) == pytest.approx(-flat.g * flat.r0 / 2, rel=1e-12)
    assert normal_force(replace(constants, t=0.12)) == pytest.approx(2 * normal_force(constants), rel=1e-12)


def test_case1_loads_balance_vertically(constants):
    # the junction force carries the weight of the cap
    cap = 2 * math.pi * constants.r0**2 * (1 - math.cos(constants.alpha))
    weight = constants.g * cap
    vertical = normal_force(constants) * math.sin(constants.alpha) * 2 * math.pi * constants.rho0
    assert vertical == pytest.approx(-weight, rel=1e-12)


def test_load_case_errors(constants):
    with pytest.raises(InvalidArgumentError):
        load_case(4, constants)
    with pytest.raises(InvalidArgumentError):
        load_case(5, constants)


# --- ring ---------------------------------------------------------------------


def test_pentagon_shape(constants):
    v = ring_pentagon(constants)
    bevel = v[3] - v[4]
    assert np.linalg.norm(bevel) == pytest.approx(constants.t, rel=1e-12)
    n = np.array([math.sin(constants.alpha), math.cos(constants.alpha)])
    assert bevel / np.linalg.norm(bevel) == pytest.approx(n, abs=1e-12)
    assert 0.5 * (v[3] + v[4]) == pytest.approx([constants.rho0, 0.0], abs=1e-12)
    assert v[1, 0] - v[0, 0] == pytest.approx(0.60)
    assert v[2, 1] - v[1, 1] == pytest.approx(0.50)
    area = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
    assert area > 0


def test_polygon_integral_rectangle_oracle():
    r1, r2, z1, z2 = 2.0, 3.5, -0.4, 0.7
    rect = np.array([[r1, z1], [r2, z1], [r2, z2], [r1, z2]])
    log = math.log(r2 / r1)
    assert polygon_integral(rect, lambda r, z: 1.0 / r) == pytest.approx((z2 - z1) * log, rel=1e-13)
    assert polygon_integral(rect, lambda r, z: z**2 / r) == pytest.approx((z2**3 - z1**3) / 3 * log, rel=1e-13)
    assert polygon_integral(rect, lambda r, z: np.ones_like(r)) == pytest.approx((r2 - r1) * (z2 - z1), rel=1e-14)


def test_polygon_integral_scaling(constants):
    v = ring_pentagon(constants)
    for s in (0.5, 3.0):
        assert polygon_integral(s * v, lambda r, z: np.ones_like(r)) == pytest.approx(
            s**2 * polygon_integral(v, lambda r, z: np.ones_like(r)), rel=1e-13
        )
        assert polygon_integral(s * v, lambda r, z: z**2 / r) == pytest.approx(
            s**3 * polygon_integral(v, lambda r, z: z**2 / r), rel=1e-13
        )


def test_polygon_integral_converged(constants):
    v = ring_pentagon(constants)
    a = polygon_integral(v, lambda r, z: z**2 / r, order=16)
    b = polygon_integral(v, lambda r, z: z**2 / r, order=32)
    assert abs(a - b) <= 1e-12 * abs(b)


def test_ring_model(constants):
    ring, model = ring_compliance(constants)
    K = model.stiffness
    assert K[0, 1] == K[1, 0]
    assert np.all(np.linalg.eigvalsh(K) > 0)
    assert abs(ring.k12) == pytest.approx(abs(ring.k21), rel=1e-14)
    for q in QUANTITIES:
        assert getattr(ring, q) == pytest.approx(getattr(RING_REFERENCE, q), rel=1e-2)


def test_ring_rejects_bad_pentagon(constants):
    with pytest.raises(GeometryError):
        ring_compliance(replace(constants, ring_width=0.0))


# --- reactions ------------------------------------------------------------------


def test_reactions_from_reference_constants():
    res = solve_reactions(SHELL_REFERENCE, RING_REFERENCE)
    assert res.R == pytest.approx(1467, abs=5)
    assert res.M == pytest.approx(-37.36, abs=0.15)
    assert res.Q == pytest.approx(2282, abs=8)
    assert res.Q == pytest.approx(res.R / math.sin(math.radians(40)), rel=1e-15)
    for shell, ring in ((SHELL_REFERENCE, RING_REFERENCE),):
        lam_s = shell.E_Lambda0 + shell.k11 * res.R + shell.k12 * res.M
        lam_r = ring.E_Lambda0 + ring.k11 * res.R + ring.k12 * res.M
        psi_s = shell.E_Psi0 + shell.k21 * res.R + shell.k22 * res.M
        psi_r = ring.E_Psi0 + ring.k21 * res.R + ring.k22 * res.M
        assert lam_s == pytest.approx(lam_r, rel=1e-9)
        assert psi_s == pytest.approx(psi_r, rel=1e-9)


def test_identical_load_terms_give_zero_reactions():
    shell = replace(SHELL_REFERENCE, E_Lambda0=RING_REFERENCE.E_Lambda0, E_Psi0=RING_REFERENCE.E_Psi0)
    res = solve_reactions(shell, RING_REFERENCE)
    assert res.R == 0.0 and res.M == 0.0


def test_singular_reaction_system():
    with pytest.raises(BenchmarkError):
        solve_reactions(RING_REFERENCE, RING_REFERENCE)


# --- shell cases ---------------------------------------------------------------


def test_zero_load_gives_zero_solution(model32):
    (sol,) = model32.solve_cases([4], ReactionResult(0.0, 0.0, 0.0))
    (case1,) = model32.solve_cases([1])
    assert np.array_equal(sol.values, case1.values)


def test_superposition(model32, cases32):
    res = ReactionResult(1470.0, -36.5, 1470.0 / math.sin(math.radians(40)))
    (case4,) = model32.solve_cases([4], res)
    combo = cases32[0] + res.R * cases32[1] + res.M * cases32[2]
    assert np.abs(case4.values - combo.values).max() <= 1e-9 * np.abs(case4.values).max()


def test_linearity_in_load_scale(constants):
    mesh = build_mesh(8)
    heavy = replace(constants, F=2.5 * constants.F)
    a = run_case(mesh, MITC4C, 1, constants=constants)
    b = run_case(mesh, MITC4C, 1, constants=heavy)
    assert np.abs(b.values - 2.5 * a.values).max() <= 1e-12 * np.abs(b.values).max()
    assert symmetry_deviation(b, mesh) == pytest.approx(symmetry_deviation(a, mesh), rel=1e-9)


def test_residuals(cases32):
    assert all(s.residual <= 1e-10 for s in cases32)


def test_compliance_signs_and_magnitude(model32, cases32):
    comp = compliance_from_solutions(model32.mesh, cases32, model32.constants.E)
    norm = comp.normalized(SHELL_REFERENCE)
    for q in QUANTITIES:
        assert 0.8 < norm[q] < 1.1, q
    assert comp.k12 == pytest.approx(-comp.k21, rel=0.03)


def test_compliance_e_invariance(constants):
    mesh = build_mesh(8)
    for formulation in (DISP4, MITC4S):
        a = shell_compliance(mesh, formulation, constants)
        b = shell_compliance(mesh, formulation, replace(constants, E=3.7 * constants.E))
        for q in QUANTITIES:
            assert getattr(b, q) == pytest.approx(getattr(a, q), rel=1e-12)


# --- post-processing -------------------------------------------------------------


def test_zero_solution_profile(model32):
    mesh = model32.mesh
    zero = Solution(np.zeros((mesh.n_nodes, 5)), model32.dofmap.frames)
    prof = moment_profile(zero, mesh, "left")
    assert len(prof) > 0 and np.all(prof[:, 1] == 0.0)
    assert prof[0, 0] >= 20.0 and prof[-1, 0] <= 40.0
    assert np.all(np.diff(prof[:, 0]) > 0)


def test_profile_endpoint_tracks_edge_moment(cases32, model32):
    # the last sample sits half an element inside the junction, so the gap
    # to the unit edge moment closes as the mesh is refined
    gaps = []
    for model, sols in ((ShellModel(build_mesh(16), STAB_C), None), (model32, cases32)):
        sols = sols or model.solve_cases([1, 2, 3])
        gaps.append(1.0 - moment_profile(sols[2], model.mesh, "left")[-1, 1])
    assert 0.0 < gaps[1] < 0.12 and gaps[1] < 0.5 * gaps[0]


def test_profile_bad_edge(model32, cases32):
    with pytest.raises(InvalidArgumentError):
        moment_profile(cases32[0], model32.mesh, "top")


def test_symmetry_deviation_of_zero_field(model32):
    mesh = model32.mesh
    assert symmetry_deviation(Solution(np.zeros((mesh.n_nodes, 5)), model32.dofmap.frames), mesh) == 0.0


# --- pipelines -------------------------------------------------------------------


def test_patch_subdivisions():
    assert patch_subdivisions(32) == 16
    for bad in (0, 3, -4, 2.0, True):
        with pytest.raises(InvalidArgumentError):
            patch_subdivisions(bad)
    assert build_mesh(8).n_elements == 48


def test_benchmark_pipeline(constants):
    res = run_benchmark(build_mesh(32), STAB_C, constants)
    assert set(res.profiles) == {"left", "right"}
    assert max(res.residuals.values()) <= 1e-10
    assert res.reactions.Q == pytest.approx(res.reactions.R / math.sin(constants.alpha), rel=1e-15)
    assert 1300 < res.reactions.R < 1700 and res.reactions.M < 0


def test_convergence_table_layout_and_determinism(constants):
    kwargs = dict(kind="perturbed", seed=4, magnitude=0.2, constants=constants)
    rows = convergence_table([MITC4C, DISP4], [4, 8], **kwargs)
    assert len(rows) == 2 * 2 * len(QUANTITIES)
    assert [r[:3] for r in rows[:6]] == [("mitc4c", 4, q) for q in QUANTITIES]
    for _, _, q, raw, norm in rows:
        assert norm == pytest.approx(raw / getattr(SHELL_REFERENCE, q), rel=1e-15)
    assert convergence_table([MITC4C, DISP4], [4, 8], workers=3, **kwargs) == rows
    with pytest.raises(InvalidArgumentError):
        convergence_table([MITC4C], [8, 4])
