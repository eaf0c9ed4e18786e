"""Girkmann dome-and-ring benchmark.

Junction forces follow the classical splitting: the horizontal force R and
the moment M act on the shell (positive as drawn in the problem figure,
M counter-clockwise in the (rho, z) half-plane) and the normal force N
follows from vertical equilibrium.  Lambda is the horizontal displacement
of the junction and Psi the rotation of the junction line about the
circumferential direction e_phi, so that
``E*Lambda = E*Lambda0 + k11 R + k12 M`` and
``E*Psi = E*Psi0 + k21 R + k22 M`` for both shell and ring.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import roots_legendre

from .assembly import (
    DOME_SYMMETRY,
    EdgeLoad,
    Factorization,
    LoadCase,
    Solution,
    assemble,
    build_dof_map,
    expand,
    junction_averages,
    load_vector,
)
from .element import Formulation, Material, strain_operators
from .errors import BenchmarkError, GeometryError, InvalidArgumentError
from .geometry import curvature_coefficients, nodal_dof_transform, straighten_element
from .mesh import DomeGeometry, SurfaceMesh, generate_quarter_cap_regular, perturb

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GirkmannConstants:
    rho0: float = 15.0  # m
    alpha: float = math.radians(40.0)
    t: float = 0.06  # m
    F: float = 32690.0  # N/m^3
    E: float = 20.59e9  # Pa
    nu: float = 0.0
    ring_width: float = 0.60  # m
    ring_height: float = 0.50  # m

    @property
    def r0(self) -> float:
        return self.rho0 / math.sin(self.alpha)

    @property
    def g(self) -> float:
        """Vertical load per unit middle-surface area."""
        return self.F * self.t

    @property
    def material(self) -> Material:
        return Material(self.E, self.nu, self.t)

    @property
    def dome(self) -> DomeGeometry:
        return DomeGeometry(self.rho0, self.alpha, self.t)


@dataclass(frozen=True)
class ComplianceSet:
    E_Lambda0: float
    k11: float
    k12: float
    E_Psi0: float
    k21: float
    k22: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def normalized(self, reference: "ComplianceSet") -> dict[str, float]:
        return {k: v / getattr(reference, k) for k, v in self.as_dict().items()}


QUANTITIES = tuple(f.name for f in fields(ComplianceSet))

# axisymmetric reference values for the dome
SHELL_REFERENCE = ComplianceSet(-2.300e6, 8.345e3, 1.477e4, -9.338e5, -1.477e4, -5.113e4)
# rigid-section ring values
RING_REFERENCE = ComplianceSet(1.363e7, -2683.0, 8418.0, -6.949e6, -8418.0, 3.696e4)


def normal_force(c: GirkmannConstants) -> float:
    """Meridional junction force N from vertical equilibrium of the dome."""
    return -c.g * c.r0 / (1.0 + math.cos(c.alpha))


# ---------------------------------------------------------------------------
# ring


@dataclass(frozen=True)
class RingModel:
    vertices: np.ndarray  # (5, 2) in (rho, z), counter-clockwise
    junction: tuple[float, float]
    stiffness: np.ndarray  # 2x2, per unit junction length, divided by E
    case1_load: np.ndarray  # generalized forces on (Lambda, Psi) for case 1


def ring_pentagon(c: GirkmannConstants, z_junction: float = 0.0) -> np.ndarray:
    """Cross-section vertices: inner face vertical, bevel of length t along the shell normal."""
    sa, ca = math.sin(c.alpha), math.cos(c.alpha)
    r_in = c.rho0 - 0.5 * c.t * sa
    z_top = z_junction + 0.5 * c.t * ca
    z_bot = z_top - c.ring_height
    return np.array(
        [
            [r_in, z_bot],
            [r_in + c.ring_width, z_bot],
            [r_in + c.ring_width, z_top],
            [c.rho0 + 0.5 * c.t * sa, z_top],
            [r_in, z_junction - 0.5 * c.t * ca],
        ]
    )


def _polygon_checks(v: np.ndarray) -> None:
    d = np.roll(v, -1, axis=0) - v
    cross = d[:, 0] * np.roll(d, -1, axis=0)[:, 1] - d[:, 1] * np.roll(d, -1, axis=0)[:, 0]
    if np.any(cross <= 0.0):
        raise GeometryError("ring cross-section is not a convex counter-clockwise polygon")


def polygon_integral(vertices: np.ndarray, func, order: int = 16) -> float:
    """Integrate func(rho, z) over a convex polygon.

    The polygon is fanned into triangles, each mapped from the unit square
    by a collapsed (Duffy) map and integrated with tensor Gauss-Legendre.
    """
    x, w = roots_legendre(order)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    W = np.outer(wu, wu)
    total = 0.0
    p0 = vertices[0]
    for p1, p2 in zip(vertices[1:-1], vertices[2:]):
        # (s, t) in the unit square -> p0 + s (p1 - p0) + s t (p2 - p1)
        pts = p0 + U[..., None] * (p1 - p0) + (U * V)[..., None] * (p2 - p1)
        area2 = abs((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]))
        total += area2 * np.sum(W * U * func(pts[..., 0], pts[..., 1]))
    return float(total)


def ring_compliance(c: GirkmannConstants, order: int = 16) -> tuple[ComplianceSet, RingModel]:
    """Compliances of a ring whose cross-section moves rigidly.

    The section translates horizontally by Lambda and rotates by Psi about
    the junction midpoint; only the hoop strain u_rho / rho stores energy.
    """
    zj = 0.0
    v = ring_pentagon(c, zj)
    _polygon_checks(v)
    funcs = (
        lambda r, z: 1.0 / r,
        lambda r, z: (z - zj) / r,
        lambda r, z: (z - zj) ** 2 / r,
    )
    k11, k12, k22 = (polygon_integral(v, f, order) / c.rho0 for f in funcs)
    K = np.array([[k11, k12], [k12, k22]])
    C = np.linalg.inv(K)

    n0 = normal_force(c)
    sa, ca = math.sin(c.alpha), math.cos(c.alpha)
    r_in, r_out = v[0, 0], v[1, 0]
    # the shell pushes the ring with -N (cos a, -sin a); the base pressure
    # carries the vertical part, acting on u_z = -(rho - rho0) Psi
    pressure = -n0 * sa * 2.0 * c.rho0 / (r_out**2 - r_in**2)
    base_moment = (r_out**3 - r_in**3) / 3.0 - c.rho0 * (r_out**2 - r_in**2) / 2.0
    load1 = np.array([-n0 * ca, -pressure * base_moment / c.rho0])
    d1 = C @ load1
    d_r = C @ np.array([-1.0, 0.0])  # ring receives -R
    d_m = C @ np.array([0.0, 1.0])  # and -M, i.e. +1 about e_phi
    comp = ComplianceSet(d1[0], d_r[0], d_m[0], d1[1], d_r[1], d_m[1])
    return comp, RingModel(v, (c.rho0, zj), K, load1)


@dataclass(frozen=True)
class ReactionResult:
    R: float
    M: float
    Q: float


def solve_reactions(shell: ComplianceSet, ring: ComplianceSet, alpha: float = math.radians(40.0)) -> ReactionResult:
    """Junction force and moment making shell and ring displacements agree."""
    A = np.array([[shell.k11 - ring.k11, shell.k12 - ring.k12], [shell.k21 - ring.k21, shell.k22 - ring.k22]])
    b = np.array([ring.E_Lambda0 - shell.E_Lambda0, ring.E_Psi0 - shell.E_Psi0])
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) > 1e12:
        raise BenchmarkError("compliance system is singular")
    R, M = np.linalg.solve(A, b)
    return ReactionResult(float(R), float(M), float(R / math.sin(alpha)))


# ---------------------------------------------------------------------------
# shell load cases


def _horizontal(points):
    h = points[:, :2] / np.linalg.norm(points[:, :2], axis=1, keepdims=True)
    zero = np.zeros((len(points), 1))
    e_rho = np.hstack([h, zero])
    e_phi = np.hstack([-h[:, 1:2], h[:, 0:1], zero])
    return e_rho, e_phi


def load_case(case: int, c: GirkmannConstants, reactions: ReactionResult | None = None) -> LoadCase:
    """Shell loads of the benchmark cases 1-4 (per unit area / junction length)."""
    sa, ca = math.sin(c.alpha), math.cos(c.alpha)
    n0 = normal_force(c)

    def meridional_force(points):
        e_rho, _ = _horizontal(points)
        return n0 * (ca * e_rho - sa * np.array([0.0, 0.0, 1.0]))

    def radial_force(points):
        return _horizontal(points)[0]

    def ccw_moment(points):
        return -_horizontal(points)[1]

    if case == 1:
        return LoadCase(np.array([0.0, 0.0, -c.g]), [EdgeLoad("junction", force=meridional_force)])
    if case == 2:
        return LoadCase(None, [EdgeLoad("junction", force=radial_force)])
    if case == 3:
        return LoadCase(None, [EdgeLoad("junction", moment=ccw_moment)])
    if case == 4:
        if reactions is None:
            raise InvalidArgumentError("case 4 needs the junction reactions")
        R, M = reactions.R, reactions.M
        return LoadCase(
            np.array([0.0, 0.0, -c.g]),
            [
                EdgeLoad(
                    "junction",
                    force=lambda p: meridional_force(p) + R * radial_force(p),
                    moment=lambda p: M * ccw_moment(p),
                )
            ],
        )
    raise InvalidArgumentError(f"unknown load case {case}")


def _pole_node(mesh: SurfaceMesh) -> int:
    tags = mesh.node_tags
    if "symmetry_left" in tags and "symmetry_right" in tags:
        common = np.intersect1d(tags["symmetry_left"], tags["symmetry_right"])
        if len(common):
            return int(common[0])
    return int(np.argmax(mesh.positions[:, 2]))


class ShellModel:
    """Assembled and factorized quarter-dome model for one formulation.

    Symmetry planes are applied on both meridional edges and the vertical
    rigid translation is removed by fixing w at the pole.  The stiffness is
    linear in E, so it is assembled for E = 1 and solutions are divided by
    E; E times any displacement then does not depend on E up to one
    rounding.
    """

    def __init__(self, mesh: SurfaceMesh, formulation: Formulation, constants: GirkmannConstants | None = None):
        self.mesh = mesh
        self.formulation = formulation
        self.constants = constants or GirkmannConstants()
        self.material = self.constants.material
        unit = Material(1.0, self.material.nu, self.material.t)
        self.dofmap = build_dof_map(mesh, DOME_SYMMETRY, pinned=[(_pole_node(mesh), 2)])
        system = assemble(mesh, formulation, unit, [], self.dofmap)
        self.K = system.K  # for E = 1
        self.factorization = Factorization(system.K)

    def solve_cases(self, cases, reactions: ReactionResult | None = None) -> list[Solution]:
        cases = list(cases)
        loads = [load_case(k, self.constants, reactions) for k in cases]
        F = assemble_loads(self.mesh, loads, self.dofmap)
        x, rel = self.factorization.solve(F)
        x /= self.constants.E
        return [
            Solution(expand(x[:, j], self.dofmap), self.dofmap.frames, float(rel[j]), {"case": k})
            for j, k in enumerate(cases)
        ]


def assemble_loads(mesh, loads, dofmap) -> np.ndarray:
    free = dofmap.index >= 0
    F = np.zeros((dofmap.n_dof, len(loads)))
    for j, case in enumerate(loads):
        F[dofmap.index[free], j] = load_vector(mesh, case, dofmap)[free]
    return F


def run_case(
    mesh: SurfaceMesh,
    formulation: Formulation,
    case: int,
    reactions: ReactionResult | None = None,
    constants: GirkmannConstants | None = None,
    model: ShellModel | None = None,
) -> Solution:
    model = model or ShellModel(mesh, formulation, constants)
    return model.solve_cases([case], reactions)[0]


def compliance_from_solutions(mesh, sols, E: float) -> ComplianceSet:
    (l1, p1), (l2, p2), (l3, p3) = (junction_averages(s, mesh) for s in sols)
    return ComplianceSet(E * l1, E * l2, E * l3, E * p1, E * p2, E * p3)


def shell_compliance(
    mesh: SurfaceMesh,
    formulation: Formulation,
    constants: GirkmannConstants | None = None,
    model: ShellModel | None = None,
) -> ComplianceSet:
    """Dome compliances from load cases 1-3 (junction averages scaled by E)."""
    model = model or ShellModel(mesh, formulation, constants)
    sols = model.solve_cases([1, 2, 3])
    return compliance_from_solutions(mesh, sols, model.constants.E)


# ---------------------------------------------------------------------------
# post-processing

EDGE_MIDPOINTS = [(0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)]
PROFILE_EDGES = {"left": "symmetry_left", "right": "symmetry_right"}


def moment_profile(
    solution: Solution,
    mesh: SurfaceMesh,
    edge: str = "left",
    material: Material | None = None,
    window: tuple[float, float] = (20.0, 40.0),
) -> np.ndarray:
    """Meridional bending moment along a symmetry edge.

    Returns an (n, 2) array of (colatitude in degrees, moment in N m/m),
    evaluated at the midpoints of the boundary element edges from the
    nodal rotations.  The sign is that of the junction moment M, so the
    last sample approaches M.
    """
    if edge not in PROFILE_EDGES:
        raise InvalidArgumentError(f"edge must be 'left' or 'right', got {edge!r}")
    tagged = mesh.edge_tags.get(PROFILE_EDGES[edge])
    if tagged is None or len(tagged) == 0:
        raise InvalidArgumentError(f"mesh has no {PROFILE_EDGES[edge]!r} edges")
    material = material or GirkmannConstants().material
    lookup = {}
    for e, row in enumerate(mesh.elements.tolist()):
        for k in range(4):
            lookup[(row[k], row[(k + 1) % 4])] = (e, k)
            lookup[(row[(k + 1) % 4], row[k])] = (e, k)
    D = material.E * material.t**3 / (12.0 * (1.0 - material.nu**2))
    nu = material.nu
    out = []
    for a, b in tagged.tolist():
        e, k = lookup[(a, b)]
        conn = mesh.elements[[e]]
        geom = straighten_element(mesh.positions[conn])
        xi, eta = EDGE_MIDPOINTS[k]
        curv = curvature_coefficients(geom, mesh.normals[conn], xi, eta)
        Bb = strain_operators(geom, curv, xi, eta).bending[0]
        T = nodal_dof_transform(geom.frame[0][None], solution.frames[conn[0]])
        de = np.einsum("aij,aj->ai", T, solution.values[conn[0]]).ravel()
        k11, k22, k12 = Bb @ de
        m = D * np.array([[k11 + nu * k22, (1 - nu) * k12], [(1 - nu) * k12, k22 + nu * k11]])
        xa, xb = mesh.positions[a], mesh.positions[b]
        mid = 0.5 * (xa + xb)
        colat = math.degrees(math.acos(mid[2] / np.linalg.norm(mid)))
        direction = xb - xa if np.linalg.norm(xb[:2]) > np.linalg.norm(xa[:2]) else xa - xb
        tl = geom.frame[0, :2] @ direction
        tl /= np.linalg.norm(tl)
        out.append((colat, -(tl @ m @ tl)))
    prof = np.array(sorted(out))
    if len(prof) == 0:
        return np.zeros((0, 2))
    m = (prof[:, 0] >= window[0] - 1e-9) & (prof[:, 0] <= window[1] + 1e-9)
    return prof[m]


def symmetry_deviation(solution: Solution, mesh: SurfaceMesh, tag: str = "junction") -> float:
    """Largest relative departure of |u| on the junction from its mean."""
    nodes = mesh.node_tags[tag]
    mag = np.linalg.norm(solution.displacements[nodes], axis=1)
    mean = mag.mean()
    if mean == 0.0:
        return 0.0
    return float(np.max(np.abs(mag - mean)) / mean)


# ---------------------------------------------------------------------------
# pipelines


def patch_subdivisions(n: int) -> int:
    """Elements per patch edge for ``n`` elements along a side of the quarter cap.

    Each straight side and the junction arc are made of two patch edges, so
    the benchmark resolution ``n`` must be even.
    """
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 2 or n % 2:
        raise InvalidArgumentError(f"N must be an even integer >= 2, got {n!r}")
    return int(n) // 2


def build_mesh(
    n: int,
    kind: str = "regular",
    seed: int = 0,
    magnitude: float = 0.25,
    constants: GirkmannConstants | None = None,
) -> SurfaceMesh:
    """Benchmark mesh with ``n`` elements along each side of the quarter cap."""
    constants = constants or GirkmannConstants()
    mesh = generate_quarter_cap_regular(patch_subdivisions(n), constants.dome)
    if kind == "regular":
        return mesh
    if kind == "perturbed":
        return perturb(mesh, magnitude, seed)
    raise InvalidArgumentError(f"unknown mesh kind {kind!r}")


@dataclass
class BenchmarkResult:
    formulation: Formulation
    shell: ComplianceSet
    ring: ComplianceSet
    reactions: ReactionResult
    case4: Solution
    residuals: dict[int, float]
    profiles: dict[str, np.ndarray] = field(default_factory=dict)


def run_benchmark(
    mesh: SurfaceMesh, formulation: Formulation, constants: GirkmannConstants | None = None
) -> BenchmarkResult:
    """Compliances, ring, reactions, case 4 and both moment profiles."""
    constants = constants or GirkmannConstants()
    model = ShellModel(mesh, formulation, constants)
    sols = model.solve_cases([1, 2, 3])
    shell = compliance_from_solutions(mesh, sols, constants.E)
    ring, _ = ring_compliance(constants)
    reactions = solve_reactions(shell, ring, constants.alpha)
    case4 = model.solve_cases([4], reactions)[0]
    residuals = {k: s.residual for k, s in zip((1, 2, 3, 4), sols + [case4])}
    profiles = {e: moment_profile(case4, mesh, e, constants.material) for e in PROFILE_EDGES}
    return BenchmarkResult(formulation, shell, ring, reactions, case4, residuals, profiles)


def convergence_table(
    formulations,
    n_list,
    kind: str = "regular",
    seed: int = 0,
    magnitude: float = 0.25,
    constants: GirkmannConstants | None = None,
    reference: ComplianceSet = SHELL_REFERENCE,
    workers: int = 1,
) -> list[tuple[str, int, str, float, float]]:
    """Rows (formulation, N, quantity, raw, normalized) in input order."""
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise InvalidArgumentError("N list must be strictly ascending")
    constants = constants or GirkmannConstants()
    jobs = [(f, n) for f in formulations for n in n_list]

    def run(job):
        f, n = job
        mesh = build_mesh(n, kind, seed, magnitude, constants)
        log.info("compliance %s N=%d (%d elements)", f.key, n, mesh.n_elements)
        return shell_compliance(mesh, f, constants)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    rows = []
    for (f, n), comp in zip(jobs, results):
        norm = comp.normalized(reference)
        for q in QUANTITIES:
            rows.append((f.key, n, q, getattr(comp, q), norm[q]))
    return rows
