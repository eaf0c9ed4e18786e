"""Per-element geometry: straightening, Jacobians, curvature, nodal frames.

All functions accept a leading batch of elements, so a whole mesh is
processed in a single call.  Element frames are stored as ``(..., 3, 3)``
arrays whose rows are the unit vectors ``i1, i2, i3``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

# reference corners of the bilinear square, counter-clockwise
XI = np.array([-1.0, 1.0, 1.0, -1.0])
ETA = np.array([-1.0, -1.0, 1.0, 1.0])

GAUSS = 1.0 / np.sqrt(3.0)
GAUSS_POINTS = [(-GAUSS, -GAUSS), (GAUSS, -GAUSS), (GAUSS, GAUSS), (-GAUSS, GAUSS)]


def shape_functions(xi: float, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear shape functions (4,) and their reference gradients (2, 4)."""
    n = 0.25 * (1.0 + XI * xi) * (1.0 + ETA * eta)
    dn = 0.25 * np.array([XI * (1.0 + ETA * eta), ETA * (1.0 + XI * xi)])
    return n, dn


@dataclass(frozen=True)
class ElementGeometry:
    """Straightened (planar) element.

    ``xy`` holds the planar corner coordinates in the local frame, ``warp``
    the common magnitude of the alternating out-of-plane corner offsets and
    ``h`` the element diameter (longest diagonal).
    """

    origin: np.ndarray  # (..., 3)
    frame: np.ndarray  # (..., 3, 3), rows i1, i2, i3
    xy: np.ndarray  # (..., 4, 2)
    warp: np.ndarray  # (...,)
    h: np.ndarray  # (...,)

    def jacobian(self, xi: float, eta: float) -> np.ndarray:
        """J = d(x, y)/d(xi, eta), shape (..., 2, 2)."""
        _, dn = shape_functions(xi, eta)
        return np.einsum("...ai,ka->...ik", self.xy, dn)

    @property
    def jbar(self) -> np.ndarray:
        return self.jacobian(0.0, 0.0)

    def gradients(self, xi: float, eta: float) -> tuple[np.ndarray, np.ndarray]:
        """Physical shape-function gradients (..., 2, 4) and det J (...,)."""
        J = self.jacobian(xi, eta)
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        if np.any(det <= 0.0):
            raise GeometryError("non-positive Jacobian determinant")
        _, dn = shape_functions(xi, eta)
        inv_t = np.linalg.inv(J).swapaxes(-1, -2)
        return inv_t @ dn, det

    def to_local(self, vectors: np.ndarray) -> np.ndarray:
        """Components of global 3-vectors in the element frame."""
        return np.einsum("...ij,...j->...i", self.frame, vectors)


def straighten_element(positions: np.ndarray) -> ElementGeometry:
    """Project four corner positions (..., 4, 3) onto their mean plane.

    The plane passes through the centroid with normal along the cross
    product of the diagonals, which makes the four corner offsets
    ``+d, -d, +d, -d``.  ``i1`` follows the first edge.
    """
    x = np.asarray(positions, dtype=float)
    origin = x.mean(axis=-2)
    d1 = x[..., 2, :] - x[..., 0, :]
    d2 = x[..., 3, :] - x[..., 1, :]
    i3 = np.cross(d1, d2)
    norm = np.linalg.norm(i3, axis=-1, keepdims=True)
    if np.any(norm <= 1e-14 * np.linalg.norm(d1, axis=-1, keepdims=True) ** 2):
        raise GeometryError("degenerate element: diagonals are parallel")
    i3 = i3 / norm
    e = x[..., 1, :] - x[..., 0, :]
    e = e - np.sum(e * i3, axis=-1, keepdims=True) * i3
    i1 = e / np.linalg.norm(e, axis=-1, keepdims=True)
    i2 = np.cross(i3, i1)
    frame = np.stack([i1, i2, i3], axis=-2)
    rel = x - origin[..., None, :]
    local = np.einsum("...ij,...aj->...ai", frame, rel)
    warp = np.abs(local[..., 0, 2])
    h = np.maximum(np.linalg.norm(d1, axis=-1), np.linalg.norm(d2, axis=-1))
    return ElementGeometry(origin=origin, frame=frame, xy=local[..., :2], warp=warp, h=h)


def curvature_coefficients(geom: ElementGeometry, normals: np.ndarray, xi: float, eta: float) -> np.ndarray:
    """Second fundamental form b (..., 2, 2) from the interpolated normal.

    b_ab = -i_a . d n_h / d x_b with n_h the bilinear interpolation of the
    nodal normals (..., 4, 3); the result is symmetrized.
    """
    dndx, _ = geom.gradients(xi, eta)
    proj = np.einsum("...ij,...aj->...ia", geom.frame[..., :2, :], normals)  # i_a . n_node
    b = -np.einsum("...ia,...ba->...ib", proj, dndx)
    return 0.5 * (b + b.swapaxes(-1, -2))


def nodal_frames(normals: np.ndarray, first: np.ndarray | None = None) -> np.ndarray:
    """Orthonormal nodal frames (..., 3, 3), rows g1, g2, n.

    ``first`` optionally prescribes the direction of g1 (projected onto the
    tangent plane); otherwise the projection of a global axis is used.
    """
    n = np.asarray(normals, dtype=float)
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    if first is None:
        ex = np.broadcast_to([1.0, 0.0, 0.0], n.shape)
        ey = np.broadcast_to([0.0, 1.0, 0.0], n.shape)
        use_y = np.abs(n[..., [0]]) > 0.9
        first = np.where(use_y, ey, ex)
    g1 = first - np.sum(first * n, axis=-1, keepdims=True) * n
    g1 = g1 / np.linalg.norm(g1, axis=-1, keepdims=True)
    g2 = np.cross(n, g1)
    return np.stack([g1, g2, n], axis=-2)


def nodal_dof_transform(frame: np.ndarray, nodal: np.ndarray) -> np.ndarray:
    """Map (..., 5, 5) from nodal dofs (u~, w~, theta~) to element dofs.

    u_a = u~_l (g_l . i_a), w = w~, theta_a = theta~_l (g_l . i_a).
    """
    frame = np.asarray(frame)
    nodal = np.asarray(nodal)
    block = np.einsum("...ak,...lk->...al", frame[..., :2, :], nodal[..., :2, :])
    shape = np.broadcast_shapes(frame.shape[:-2], nodal.shape[:-2])
    T = np.zeros(shape + (5, 5))
    T[..., 0:2, 0:2] = block
    T[..., 2, 2] = 1.0
    T[..., 3:5, 3:5] = block
    return T
