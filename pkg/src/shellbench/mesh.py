"""Quadrilateral surface meshes of the quarter spherical cap.

The regular layout splits the 90 degree sector (pole plus the two junction
corners) into three quadrilateral patches joined at an interior point.  Each
patch is a transfinite (Coons) patch in the polar plane whose radius is the
colatitude and whose angle is the azimuth; points of that plane are then
mapped onto the sphere.  Keeping the patch parameters of every element
corner lets :func:`refine` place new nodes exactly where a finer regular
mesh would put them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping

import numpy as np
from scipy.spatial import cKDTree

from .errors import GeometryError, InvalidArgumentError

TAG_NAMES = ("junction", "symmetry_left", "symmetry_right")


@dataclass(frozen=True)
class DomeGeometry:
    """Spherical dome of base radius ``rho0`` and opening angle ``alpha``."""

    rho0: float = 15.0
    alpha: float = math.radians(40.0)
    thickness: float = 0.06

    def __post_init__(self):
        if not 0.0 < self.alpha < 0.5 * math.pi:
            raise InvalidArgumentError(f"opening angle must lie in (0, pi/2), got {self.alpha}")
        if self.rho0 <= 0.0 or self.thickness <= 0.0:
            raise InvalidArgumentError("rho0 and thickness must be positive")

    @property
    def r0(self) -> float:
        return self.rho0 / math.sin(self.alpha)


@dataclass(frozen=True)
class Provenance:
    kind: str = "analytic"  # analytic | imported | perturbed
    seed: int | None = None
    magnitude: float | None = None


def _readonly(a: np.ndarray | None, dtype=None) -> np.ndarray | None:
    if a is None:
        return None
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Immutable quadrilateral surface mesh.

    Node ids are the row indices of ``positions``.  ``edge_tags`` maps a tag
    name to an ``(k, 2)`` array of boundary edges, each listed in the
    traversal direction of its element.
    """

    positions: np.ndarray
    elements: np.ndarray
    normals: np.ndarray | None = None
    edge_tags: Mapping[str, np.ndarray] = field(default_factory=dict)
    provenance: Provenance = Provenance()
    geometry: DomeGeometry | None = None
    patch_ids: np.ndarray | None = None
    corner_params: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "positions", _readonly(self.positions, float))
        object.__setattr__(self, "elements", _readonly(self.elements, np.int64))
        object.__setattr__(self, "normals", _readonly(self.normals, float))
        object.__setattr__(self, "patch_ids", _readonly(self.patch_ids, np.int64))
        object.__setattr__(self, "corner_params", _readonly(self.corner_params, float))
        tags = {k: _readonly(np.asarray(v, dtype=np.int64).reshape(-1, 2)) for k, v in self.edge_tags.items()}
        object.__setattr__(self, "edge_tags", tags)
        els = self.elements
        if els.ndim != 2 or els.shape[1] != 4:
            raise InvalidArgumentError("elements must be an (n, 4) array")
        if els.size and (els.min() < 0 or els.max() >= len(self.positions)):
            raise InvalidArgumentError("element references a missing node")
        if np.any(np.diff(np.sort(els, axis=1), axis=1) == 0):
            raise InvalidArgumentError("element with repeated node ids")

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @cached_property
    def node_tags(self) -> dict[str, np.ndarray]:
        return {k: np.unique(v) for k, v in self.edge_tags.items()}

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """Edges belonging to exactly one element, in element traversal order."""
        return _boundary_edges(self.elements)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    def with_normals(self, normals: np.ndarray) -> "SurfaceMesh":
        return replace(self, normals=normals)


def element_edges(elements: np.ndarray) -> np.ndarray:
    """(n, 4, 2) node pairs of every element edge, in traversal order."""
    return np.stack([elements, np.roll(elements, -1, axis=1)], axis=-1)


def _boundary_edges(elements: np.ndarray) -> np.ndarray:
    edges = element_edges(elements).reshape(-1, 2)
    keys = np.sort(edges, axis=1)
    _, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    return edges[counts[inv.ravel()] == 1]


# ---------------------------------------------------------------------------
# regular quarter-cap layout

# Interior junction point of the three patches, on the 45 degree meridian of
# the polar plane.  This radius makes all three patch angles there 120 deg.
_CENTER = (3.0 + math.sqrt(3.0)) / 12.0


def _layout(alpha: float):
    s45 = math.sqrt(0.5)
    P = (0.0, 0.0)
    A = (alpha, 0.0)
    B = (0.0, alpha)
    mPA = (0.5 * alpha, 0.0)
    mPB = (0.0, 0.5 * alpha)
    mAB = (alpha * s45, alpha * s45)
    C = (_CENTER * alpha, _CENTER * alpha)
    # corners q0..q3 and the kind of the (bottom, right, top, left) curves
    return [
        ((P, mPA, C, mPB), ("line", "line", "line", "line")),
        ((mPA, A, mAB, C), ("line", "arc", "line", "line")),
        ((mPB, C, mAB, B), ("line", "line", "arc", "line")),
    ]


def _curve(kind, p, q, u):
    p = np.asarray(p)
    q = np.asarray(q)
    u = np.asarray(u)[..., None]
    if kind == "line":
        return (1.0 - u) * p + u * q
    r = math.hypot(*p)
    a0 = math.atan2(p[1], p[0])
    a1 = math.atan2(q[1], q[0])
    ang = (1.0 - u[..., 0]) * a0 + u[..., 0] * a1
    return r * np.stack([np.cos(ang), np.sin(ang)], axis=-1)


def patch_point(patch_ids, s, t, alpha: float) -> np.ndarray:
    """Polar-plane point of patch parameters ``(s, t)`` in [0, 1]^2."""
    patch_ids = np.asarray(patch_ids)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast(patch_ids, s, t).shape
    patch_ids, s, t = (np.broadcast_to(a, shape) for a in (patch_ids, s, t))
    out = np.zeros(shape + (2,))
    for pid, (corners, kinds) in enumerate(_layout(alpha)):
        m = patch_ids == pid
        if not np.any(m):
            continue
        q0, q1, q2, q3 = (np.asarray(c) for c in corners)
        ss, tt = s[m], t[m]
        bottom = _curve(kinds[0], q0, q1, ss)
        right = _curve(kinds[1], q1, q2, tt)
        top = _curve(kinds[2], q3, q2, ss)
        left = _curve(kinds[3], q0, q3, tt)
        S, T = ss[:, None], tt[:, None]
        bilinear = (1 - S) * (1 - T) * q0 + S * (1 - T) * q1 + S * T * q2 + (1 - S) * T * q3
        out[m] = (1 - T) * bottom + T * top + (1 - S) * left + S * right - bilinear
    return out


def plane_to_sphere(xy: np.ndarray, r0: float) -> np.ndarray:
    xy = np.asarray(xy, dtype=float)
    colat = np.hypot(xy[..., 0], xy[..., 1])
    azim = np.arctan2(xy[..., 1], xy[..., 0])
    st = np.sin(colat)
    return r0 * np.stack([st * np.cos(azim), st * np.sin(azim), np.cos(colat)], axis=-1)


def _map_params(patch_ids, params, geom: DomeGeometry) -> np.ndarray:
    xy = patch_point(patch_ids, params[..., 0], params[..., 1], geom.alpha)
    return plane_to_sphere(xy, geom.r0)


def _merge_points(points: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Merge coincident points; returns (unique index per point, kept point ids)."""
    rep = np.arange(len(points))
    pairs = cKDTree(points).query_pairs(tol, output_type="ndarray")
    if len(pairs):
        pairs = np.sort(pairs, axis=1)
        while True:
            new = rep.copy()
            np.minimum.at(new, pairs[:, 1], rep[pairs[:, 0]])
            np.minimum.at(new, pairs[:, 0], rep[pairs[:, 1]])
            new = new[new]
            if np.array_equal(new, rep):
                break
            rep = new
    keep, inverse = np.unique(rep, return_inverse=True)
    return inverse, keep


def _classify_boundary(positions, edges, geom: DomeGeometry) -> dict[str, np.ndarray]:
    tol = 1e-9 * geom.r0
    p = positions[edges]  # (k, 2, 3)
    colat = np.arccos(np.clip(p[..., 2] / np.linalg.norm(p, axis=-1), -1.0, 1.0))
    tags = {
        "junction": np.all(np.abs(colat - geom.alpha) < 1e-9, axis=1),
        "symmetry_left": np.all(np.abs(p[..., 1]) < tol, axis=1),
        "symmetry_right": np.all(np.abs(p[..., 0]) < tol, axis=1),
    }
    return {k: edges[m] for k, m in tags.items()}


def generate_quarter_cap_regular(n: int, geom: DomeGeometry | None = None) -> SurfaceMesh:
    """Regular quarter-cap mesh with ``n`` elements along every patch edge.

    The mesh has ``3 n**2`` elements and ``3 (n+1)**2 - 3 (n+1) + 1`` nodes.
    """
    if not isinstance(n, (int, np.integer)) or n <= 0:
        raise InvalidArgumentError(f"elements per edge must be a positive integer, got {n!r}")
    geom = geom or DomeGeometry()
    u = np.linspace(0.0, 1.0, n + 1)
    S, T = np.meshgrid(u, u, indexing="xy")  # [j, i] -> (s_i, t_j)
    local = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    quads = np.stack(
        [local[:-1, :-1], local[:-1, 1:], local[1:, 1:], local[1:, :-1]], axis=-1
    ).reshape(-1, 4)
    params_local = np.stack([S.ravel(), T.ravel()], axis=-1)

    pts, elems, pids, cparams = [], [], [], []
    for pid in range(3):
        offset = pid * (n + 1) ** 2
        pts.append(patch_point(pid, params_local[:, 0], params_local[:, 1], geom.alpha))
        elems.append(quads + offset)
        pids.append(np.full(len(quads), pid))
        cparams.append(params_local[quads])
    pts = np.concatenate(pts)
    inverse, keep = _merge_points(pts, 1e-9 * geom.alpha / n)
    elements = inverse[np.concatenate(elems)]
    positions = plane_to_sphere(pts[keep], geom.r0)
    tags = _classify_boundary(positions, _boundary_edges(elements), geom)
    mesh = SurfaceMesh(
        positions=positions,
        elements=elements,
        normals=positions / np.linalg.norm(positions, axis=1, keepdims=True),
        edge_tags=tags,
        provenance=Provenance("analytic"),
        geometry=geom,
        patch_ids=np.concatenate(pids),
        corner_params=np.concatenate(cparams),
    )
    return mesh


def generate_rectangle(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0) -> SurfaceMesh:
    """Flat ``nx`` x ``ny`` mesh of ``[0, lx] x [0, ly]`` in the z = 0 plane."""
    if nx <= 0 or ny <= 0:
        raise InvalidArgumentError("element counts must be positive")
    x, y = np.meshgrid(np.linspace(0.0, lx, nx + 1), np.linspace(0.0, ly, ny + 1))
    positions = np.stack([x.ravel(), y.ravel(), np.zeros(x.size)], axis=-1)
    ids = np.arange(x.size).reshape(ny + 1, nx + 1)
    elements = np.stack([ids[:-1, :-1], ids[:-1, 1:], ids[1:, 1:], ids[1:, :-1]], axis=-1).reshape(-1, 4)
    normals = np.tile([0.0, 0.0, 1.0], (len(positions), 1))
    return SurfaceMesh(positions, elements, normals, provenance=Provenance("imported"))


# ---------------------------------------------------------------------------
# refinement and perturbation


def refine(mesh: SurfaceMesh) -> SurfaceMesh:
    """Split every quadrilateral into four through edge midpoints and centroid."""
    els = mesh.elements
    ne, nn = len(els), mesh.n_nodes
    edges = element_edges(els)  # (ne, 4, 2)
    keys = np.sort(edges, axis=-1).reshape(-1, 2)
    uniq, first, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inv = inv.ravel()
    n_edges = len(uniq)
    edge_node = nn + inv.reshape(ne, 4)
    center_node = nn + n_edges + np.arange(ne)

    if mesh.corner_params is not None and mesh.geometry is not None:
        cp = mesh.corner_params
        mid_params = 0.5 * (cp + np.roll(cp, -1, axis=1))  # (ne, 4, 2)
        ctr_params = cp.mean(axis=1)
        pid4 = np.repeat(mesh.patch_ids[:, None], 4, axis=1)
        mid_pos = _map_params(pid4, mid_params, mesh.geometry).reshape(-1, 3)[first]
        ctr_pos = _map_params(mesh.patch_ids, ctr_params, mesh.geometry)
    else:
        p = mesh.positions
        mid_pos = p[uniq].mean(axis=1)
        ctr_pos = p[els].mean(axis=1)
        if mesh.geometry is not None:
            r0 = mesh.geometry.r0
            mid_pos *= r0 / np.linalg.norm(mid_pos, axis=1, keepdims=True)
            ctr_pos *= r0 / np.linalg.norm(ctr_pos, axis=1, keepdims=True)
    positions = np.concatenate([mesh.positions, mid_pos, ctr_pos])

    c, m, z = els, edge_node, center_node
    children = np.stack(
        [
            np.stack([c[:, 0], m[:, 0], z, m[:, 3]], axis=-1),
            np.stack([m[:, 0], c[:, 1], m[:, 1], z], axis=-1),
            np.stack([z, m[:, 1], c[:, 2], m[:, 2]], axis=-1),
            np.stack([m[:, 3], z, m[:, 2], c[:, 3]], axis=-1),
        ],
        axis=1,
    ).reshape(-1, 4)

    patch_ids = corner_params = None
    if mesh.corner_params is not None:
        cp = mesh.corner_params
        mp = 0.5 * (cp + np.roll(cp, -1, axis=1))
        zp = cp.mean(axis=1)
        corner_params = np.stack(
            [
                np.stack([cp[:, 0], mp[:, 0], zp, mp[:, 3]], axis=1),
                np.stack([mp[:, 0], cp[:, 1], mp[:, 1], zp], axis=1),
                np.stack([zp, mp[:, 1], cp[:, 2], mp[:, 2]], axis=1),
                np.stack([mp[:, 3], zp, mp[:, 2], cp[:, 3]], axis=1),
            ],
            axis=1,
        ).reshape(-1, 4, 2)
        patch_ids = np.repeat(mesh.patch_ids, 4)

    lookup = {tuple(k): nn + i for i, k in enumerate(uniq.tolist())}
    tags = {}
    for name, tagged in mesh.edge_tags.items():
        mids = np.array([lookup[(min(a, b), max(a, b))] for a, b in tagged.tolist()], dtype=np.int64)
        tags[name] = np.stack(
            [np.stack([tagged[:, 0], mids], axis=-1), np.stack([mids, tagged[:, 1]], axis=-1)], axis=1
        ).reshape(-1, 2)

    out = SurfaceMesh(
        positions=positions,
        elements=children,
        normals=None,
        edge_tags=tags,
        provenance=mesh.provenance,
        geometry=mesh.geometry,
        patch_ids=patch_ids,
        corner_params=corner_params,
    )
    if mesh.normals is not None:
        mode = "analytic" if mesh.geometry is not None else "averaged"
        out = compute_nodal_normals(out, mode)
    return out


def corner_jacobians(positions: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """Corner Jacobian determinants (ne, 4) of the straightened elements."""
    from .geometry import straighten_element

    g = straighten_element(positions[elements])
    xy = g.xy
    nxt = np.roll(xy, -1, axis=1) - xy
    prv = np.roll(xy, 1, axis=1) - xy
    return nxt[..., 0] * prv[..., 1] - nxt[..., 1] * prv[..., 0]


def check_convex(mesh: SurfaceMesh) -> None:
    dets = corner_jacobians(mesh.positions, mesh.elements)
    bad = np.nonzero(np.any(dets <= 0.0, axis=1))[0]
    if len(bad):
        raise GeometryError(f"{len(bad)} non-convex element(s), first id {bad[0]}")


def _tangent_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.where(np.abs(n[:, [0]]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    e1 = np.cross(ref, n)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(n, e1)
    return e1, e2


def perturb(mesh: SurfaceMesh, magnitude: float, seed: int) -> SurfaceMesh:
    """Move interior nodes randomly in their tangent planes.

    Each interior node moves by at most ``magnitude`` times its shortest
    incident edge, then is projected back onto the sphere.  Boundary nodes
    stay put.  The result depends only on ``(seed, magnitude)``.
    """
    if not 0.0 <= magnitude <= 0.4:
        raise InvalidArgumentError(f"perturbation magnitude must lie in [0, 0.4], got {magnitude}")
    if magnitude == 0.0:
        return mesh
    p = mesh.positions
    edges = element_edges(mesh.elements).reshape(-1, 2)
    lengths = np.linalg.norm(p[edges[:, 0]] - p[edges[:, 1]], axis=1)
    hmin = np.full(mesh.n_nodes, np.inf)
    np.minimum.at(hmin, edges[:, 0], lengths)
    np.minimum.at(hmin, edges[:, 1], lengths)

    rng = np.random.default_rng(seed)
    draws = rng.random((mesh.n_nodes, 2))
    if mesh.geometry is not None:
        n = p / np.linalg.norm(p, axis=1, keepdims=True)
    elif mesh.normals is not None:
        n = mesh.normals
    else:
        n = compute_nodal_normals(mesh, "averaged").normals
    e1, e2 = _tangent_basis(n)
    ang = 2.0 * np.pi * draws[:, 1]
    step = (magnitude * hmin * draws[:, 0])[:, None] * (np.cos(ang)[:, None] * e1 + np.sin(ang)[:, None] * e2)
    fixed = np.zeros(mesh.n_nodes, dtype=bool)
    fixed[mesh.boundary_nodes] = True
    for nodes in mesh.node_tags.values():
        fixed[nodes] = True
    step[fixed] = 0.0
    q = p + step
    if mesh.geometry is not None:
        q[~fixed] *= mesh.geometry.r0 / np.linalg.norm(q[~fixed], axis=1, keepdims=True)
    out = SurfaceMesh(
        positions=q,
        elements=mesh.elements,
        normals=None,
        edge_tags=mesh.edge_tags,
        provenance=Provenance("perturbed", seed=seed, magnitude=magnitude),
        geometry=mesh.geometry,
    )
    check_convex(out)
    mode = "analytic" if mesh.geometry is not None else "averaged"
    return compute_nodal_normals(out, mode)


def compute_nodal_normals(mesh: SurfaceMesh, mode: str = "analytic") -> SurfaceMesh:
    """Return ``mesh`` with nodal normals set.

    ``analytic`` uses the sphere centred at the origin and requires a mesh
    that lies on it (analytic or perturbed provenance); ``averaged`` takes
    the normalized mean of the adjacent element normals.
    """
    p = mesh.positions
    if mode == "analytic":
        if mesh.geometry is None or mesh.provenance.kind == "imported":
            raise InvalidArgumentError("analytic normals need a mesh generated on the sphere")
        return mesh.with_normals(p / np.linalg.norm(p, axis=1, keepdims=True))
    if mode != "averaged":
        raise InvalidArgumentError(f"unknown normal mode {mode!r}")
    x = p[mesh.elements]
    facet = np.cross(x[:, 2] - x[:, 0], x[:, 3] - x[:, 1])
    norm = np.linalg.norm(facet, axis=1, keepdims=True)
    if np.any(norm == 0.0):
        raise GeometryError("degenerate element with zero normal")
    facet /= norm
    acc = np.zeros_like(p)
    np.add.at(acc, mesh.elements.ravel(), np.repeat(facet, 4, axis=0))
    length = np.linalg.norm(acc, axis=1, keepdims=True)
    if np.any(length < 1e-12):
        raise GeometryError("zero mean normal at a node")
    return mesh.with_normals(acc / length)
