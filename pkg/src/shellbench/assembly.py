"""Global dof numbering, sparse assembly and the linear solve."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from cvxopt import cholmod, matrix, spmatrix

from .element import Formulation, Material, element_load, element_stiffness, surface_load_from_vector
from .errors import ConstraintError, GeometryError, InvalidArgumentError, SolverError
from .geometry import GAUSS, nodal_dof_transform, nodal_frames, straighten_element
from .mesh import SurfaceMesh

log = logging.getLogger(__name__)

# in-plane unit normals of the two symmetry planes of the quarter dome
DOME_SYMMETRY = {"symmetry_left": (0.0, 1.0, 0.0), "symmetry_right": (1.0, 0.0, 0.0)}

CHUNK = 16384


@dataclass(frozen=True)
class DofMap:
    """Nodal frames and global numbering of the free dofs.

    ``frames[i]`` has rows ``g1, g2, n`` of node ``i``; ``index[i, k]`` is
    the global number of local dof ``k`` of node ``i``, or -1 when the dof
    is eliminated.
    """

    frames: np.ndarray
    index: np.ndarray

    @property
    def n_dof(self) -> int:
        return int(self.index.max()) + 1 if self.index.size else 0

    @property
    def constrained(self) -> np.ndarray:
        return self.index < 0


def build_dof_map(
    mesh: SurfaceMesh,
    symmetry: Mapping[str, Sequence[float]] | None = None,
    pinned: Sequence[tuple[int, int]] = (),
) -> DofMap:
    """Set nodal frames and eliminate the dofs fixed by symmetry planes.

    On a plane with unit normal p the frame is turned so that g2 follows the
    tangential projection of p, and u2, theta2 are eliminated.  A node on two
    planes loses all four tangential dofs.  ``pinned`` lists extra
    ``(node, local dof)`` pairs to eliminate.
    """
    if mesh.normals is None:
        raise InvalidArgumentError("mesh has no nodal normals")
    n = mesh.normals
    frames = nodal_frames(n).copy()
    fixed = np.zeros((mesh.n_nodes, 5), dtype=bool)
    planes_at: dict[int, list[np.ndarray]] = {}
    for tag, normal in (symmetry or {}).items():
        if tag not in mesh.node_tags:
            raise ConstraintError(f"mesh has no tag {tag!r}")
        p = np.asarray(normal, dtype=float)
        p = p / np.linalg.norm(p)
        for node in mesh.node_tags[tag].tolist():
            planes_at.setdefault(node, []).append(p)
    for node, planes in planes_at.items():
        nn = n[node]
        if len(planes) == 1 or all(abs(abs(q @ planes[0]) - 1.0) < 1e-12 for q in planes[1:]):
            p = planes[0]
            g2 = p - (p @ nn) * nn
            norm = np.linalg.norm(g2)
            if norm < 1e-8:
                raise ConstraintError(f"node {node}: symmetry plane normal parallel to the surface normal")
            g2 /= norm
            frames[node] = [np.cross(g2, nn), g2, nn]
            fixed[node, [1, 4]] = True
        else:
            if any(abs(q @ nn) > 1e-6 for q in planes):
                raise ConstraintError(f"node {node}: conflicting symmetry planes")
            fixed[node, [0, 1, 3, 4]] = True
    for node, dof in pinned:
        fixed[node, dof] = True
    index = np.full((mesh.n_nodes, 5), -1, dtype=np.int64)
    free = ~fixed
    index[free] = np.arange(int(free.sum()))
    return DofMap(frames=frames, index=index)


def symmetrize_normals(mesh: SurfaceMesh, symmetry: Mapping[str, Sequence[float]] = DOME_SYMMETRY) -> SurfaceMesh:
    """Project the normals of symmetry-plane nodes into their planes.

    This is what averaging over the mirrored full mesh would give; one-sided
    averaged normals otherwise tilt out of the plane and the pole normal of a
    quarter model conflicts with both planes.
    """
    if mesh.normals is None:
        raise InvalidArgumentError("mesh has no nodal normals")
    normals = mesh.normals.copy()
    for tag, normal in symmetry.items():
        if tag not in mesh.node_tags:
            raise ConstraintError(f"mesh has no tag {tag!r}")
        p = np.asarray(normal, dtype=float)
        p = p / np.linalg.norm(p)
        nodes = mesh.node_tags[tag]
        normals[nodes] -= np.outer(normals[nodes] @ p, p)
    length = np.linalg.norm(normals, axis=1, keepdims=True)
    if np.any(length < 1e-8):
        raise ConstraintError("a nodal normal is perpendicular to a symmetry plane")
    return mesh.with_normals(normals / length)


@dataclass
class EdgeLoad:
    """Line loads per unit length on a tagged edge set.

    ``force`` and ``moment`` map points (k, 3) to global vectors (k, 3).
    """

    tag: str
    force: Callable[[np.ndarray], np.ndarray] | None = None
    moment: Callable[[np.ndarray], np.ndarray] | None = None


@dataclass
class LoadCase:
    surface_force: np.ndarray | None = None  # global force per unit area
    edge_loads: list[EdgeLoad] = field(default_factory=list)


@dataclass
class GlobalSystem:
    K: sp.csr_matrix
    f: np.ndarray  # (n_dof,) or (n_dof, n_cases)
    dofmap: DofMap


@dataclass
class Solution:
    """Nodal (u1, u2, w, theta1, theta2) in the nodal frames."""

    values: np.ndarray  # (n_nodes, 5)
    frames: np.ndarray  # (n_nodes, 3, 3)
    residual: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def displacements(self) -> np.ndarray:
        """Global displacement vectors (n_nodes, 3)."""
        v = self.values
        return np.einsum("nk,nkj->nj", v[:, [0, 1, 2]], self.frames)

    @property
    def rotations(self) -> np.ndarray:
        """theta as global tangent vectors (n_nodes, 3)."""
        return np.einsum("nk,nkj->nj", self.values[:, [3, 4]], self.frames[:, :2, :])

    def __add__(self, other: "Solution") -> "Solution":
        return Solution(self.values + other.values, self.frames)

    def __mul__(self, s: float) -> "Solution":
        return Solution(self.values * s, self.frames)

    __rmul__ = __mul__


def _element_transforms(frames_el: np.ndarray, nodal_el: np.ndarray) -> np.ndarray:
    return nodal_dof_transform(frames_el[:, None, :, :], nodal_el)  # (ne, 4, 5, 5)


def _to_nodal(K: np.ndarray, T: np.ndarray) -> np.ndarray:
    ne = K.shape[0]
    Kb = K.reshape(ne, 4, 5, 4, 5)
    out = np.einsum("eaki,eakbl,eblj->eaibj", T, Kb, T, optimize=True)
    return out.reshape(ne, 20, 20)


def element_matrices(mesh, formulation, material, dofmap, elements=None):
    """Yield (element ids, nodal-frame stiffness (n, 20, 20), transforms) in chunks."""
    ids = np.arange(mesh.n_elements) if elements is None else np.asarray(elements)
    for start in range(0, len(ids), CHUNK):
        sel = ids[start : start + CHUNK]
        conn = mesh.elements[sel]
        try:
            geom = straighten_element(mesh.positions[conn])
            Ke = element_stiffness(formulation, geom, mesh.normals[conn], material)
        except GeometryError as exc:
            bad = _first_bad_element(mesh, sel, formulation, material)
            raise GeometryError(f"element {bad}: {exc}") from exc
        T = _element_transforms(geom.frame, dofmap.frames[conn])
        yield sel, _to_nodal(Ke, T), T, geom


def _first_bad_element(mesh, sel, formulation, material):
    for e in sel.tolist():
        try:
            conn = mesh.elements[[e]]
            element_stiffness(formulation, straighten_element(mesh.positions[conn]), mesh.normals[conn], material)
        except GeometryError:
            return e
    return -1


def _edge_load(mesh: SurfaceMesh, load: EdgeLoad, dofmap: DofMap) -> np.ndarray:
    """Line loads integrated straight into the nodal frames.

    Displacements along an edge are the linear interpolation of the nodal
    vectors, so the consistent nodal force is the 2-point Gauss integral of
    N_a F resolved on (g1, g2, n) of node a.  A moment m works on theta
    through m x n.
    """
    edges = mesh.edge_tags.get(load.tag)
    if edges is None or len(edges) == 0:
        raise InvalidArgumentError(f"no edges tagged {load.tag!r}")
    edges = np.asarray(edges)
    xa, xb = mesh.positions[edges[:, 0]], mesh.positions[edges[:, 1]]
    length = np.linalg.norm(xb - xa, axis=1)
    f = np.zeros((mesh.n_nodes, 5))
    for s in (-GAUSS, GAUSS):
        na, nb = 0.5 * (1.0 - s), 0.5 * (1.0 + s)
        pts = na * xa + nb * xb
        force = load.force(pts) if load.force is not None else None
        moment = load.moment(pts) if load.moment is not None else None
        for col, shape in ((0, na), (1, nb)):
            nodes = edges[:, col]
            frames = dofmap.frames[nodes]
            fn = np.zeros((len(nodes), 5))
            if force is not None:
                fn[:, :3] = np.einsum("nkj,nj->nk", frames, force)
            if moment is not None:
                tau = np.cross(moment, frames[:, 2])
                fn[:, 3:] = np.einsum("nkj,nj->nk", frames[:, :2], tau)
            np.add.at(f, nodes, (0.5 * length * shape)[:, None] * fn)
    return f


def load_vector(mesh: SurfaceMesh, load: LoadCase, dofmap: DofMap) -> np.ndarray:
    """Nodal-frame load vector (n_nodes, 5) of one load case."""
    f = np.zeros((mesh.n_nodes, 5))
    if load.surface_force is not None:
        for start in range(0, mesh.n_elements, CHUNK):
            conn = mesh.elements[start : start + CHUNK]
            geom = straighten_element(mesh.positions[conn])
            fe = element_load(geom, surface=surface_load_from_vector(geom, np.asarray(load.surface_force, float)))
            T = _element_transforms(geom.frame, dofmap.frames[conn])
            fn = np.einsum("eaki,eak->eai", T, fe.reshape(-1, 4, 5))
            np.add.at(f, conn, fn)
    for el in load.edge_loads:
        f += _edge_load(mesh, el, dofmap)
    return f


def assemble(
    mesh: SurfaceMesh,
    formulation: Formulation,
    material: Material,
    loads: Sequence[LoadCase] | LoadCase = (),
    dofmap: DofMap | None = None,
) -> GlobalSystem:
    """Assemble the reduced global stiffness and load vectors.

    Element matrices are rotated into the nodal frames before scattering;
    eliminated dofs are dropped from rows and columns.
    """
    dofmap = dofmap or build_dof_map(mesh)
    n_dof = dofmap.n_dof
    K = sp.csr_matrix((n_dof, n_dof))
    for sel, Kn, _, _ in element_matrices(mesh, formulation, material, dofmap):
        idx = dofmap.index[mesh.elements[sel]].reshape(len(sel), 20)
        rows = np.broadcast_to(idx[:, :, None], Kn.shape)
        cols = np.broadcast_to(idx[:, None, :], Kn.shape)
        keep = (rows >= 0) & (cols >= 0)
        K = K + sp.csr_matrix((Kn[keep], (rows[keep], cols[keep])), shape=(n_dof, n_dof))
    K.sum_duplicates()
    single = isinstance(loads, LoadCase)
    cases = [loads] if single else list(loads)
    free = dofmap.index >= 0
    F = np.zeros((n_dof, len(cases)))
    for j, case in enumerate(cases):
        F[dofmap.index[free], j] = load_vector(mesh, case, dofmap)[free]
    return GlobalSystem(K=K, f=F[:, 0] if single else F, dofmap=dofmap)


class Factorization:
    """Sparse Cholesky factorization of an SPD matrix (CHOLMOD via cvxopt)."""

    def __init__(self, K: sp.spmatrix):
        self.K = sp.csr_matrix(K)
        lower = sp.tril(self.K).tocoo()
        A = spmatrix(
            matrix(lower.data.astype(float)),
            matrix(lower.row.astype(np.int64)),
            matrix(lower.col.astype(np.int64)),
            self.K.shape,
        )
        cholmod.options["supernodal"] = 2
        try:
            self._F = cholmod.symbolic(A, uplo="L")
            cholmod.numeric(A, self._F)
        except ArithmeticError as exc:
            raise SolverError(f"matrix is not positive definite ({exc})") from exc
        del A

    def _solve_once(self, rhs: np.ndarray) -> np.ndarray:
        B = matrix(np.ascontiguousarray(rhs, dtype=float).reshape(rhs.shape[0], -1))
        cholmod.solve(self._F, B)
        return np.array(B).reshape(rhs.shape)

    def solve(self, rhs: np.ndarray, tol: float = 1e-10, max_refine: int = 3) -> tuple[np.ndarray, np.ndarray]:
        """Solve with iterative refinement; returns (x, relative residuals)."""
        rhs = np.asarray(rhs, dtype=float)
        x = self._solve_once(rhs)
        norm_f = np.linalg.norm(rhs.reshape(rhs.shape[0], -1), axis=0)
        norm_f[norm_f == 0.0] = 1.0
        for _ in range(max_refine + 1):
            r = rhs - self.K @ x
            rel = np.linalg.norm(r.reshape(r.shape[0], -1), axis=0) / norm_f
            if np.all(rel <= tol):
                break
            x = x + self._solve_once(r)
        else:
            raise SolverError(f"relative residual {rel.max():.3e} above {tol:g}")
        return x, rel


def expand(x: np.ndarray, dofmap: DofMap) -> np.ndarray:
    """Scatter a reduced dof vector into (n_nodes, 5) with zeros where eliminated."""
    out = np.zeros(dofmap.index.shape)
    free = dofmap.index >= 0
    out[free] = x[dofmap.index[free]]
    return out


def solve(system: GlobalSystem, factorization: Factorization | None = None):
    """Solve the assembled system; returns a Solution (or one per load column)."""
    fac = factorization or Factorization(system.K)
    x, rel = fac.solve(system.f)
    if system.f.ndim == 1:
        return Solution(expand(x, system.dofmap), system.dofmap.frames, float(rel[0]), {"method": "cholmod"})
    return [
        Solution(expand(x[:, j], system.dofmap), system.dofmap.frames, float(rel[j]), {"method": "cholmod"})
        for j in range(x.shape[1])
    ]


def junction_averages(solution: Solution, mesh: SurfaceMesh, tag: str = "junction") -> tuple[float, float]:
    """Mean horizontal radial displacement and meridional rotation on a tag.

    The rotation is the component of the normal rotation vector
    ``n x theta`` along the circumferential direction, which equals
    ``theta . (e_c x n)``.
    """
    nodes = mesh.node_tags.get(tag)
    if nodes is None or len(nodes) == 0:
        raise InvalidArgumentError(f"no nodes tagged {tag!r}")
    p = mesh.positions[nodes]
    horiz = p[:, :2] / np.linalg.norm(p[:, :2], axis=1, keepdims=True)
    e_rho = np.column_stack([horiz, np.zeros(len(nodes))])
    e_c = np.column_stack([-horiz[:, 1], horiz[:, 0], np.zeros(len(nodes))])
    n = solution.frames[nodes, 2]
    lam = np.sum(solution.displacements[nodes] * e_rho, axis=1)
    psi = np.sum(solution.rotations[nodes] * np.cross(e_c, n), axis=1)
    return float(lam.mean()), float(psi.mean())
