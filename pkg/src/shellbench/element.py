"""Four-node shallow-shell element operators.

Degrees of freedom are ordered per node as ``(u1, u2, w, theta1, theta2)``
in the element frame.  Membrane and bending strains use tensor shear
components, so the rows of the strain operators are ``(e11, e22, e12)``,
``(k11, k22, k12)`` and ``(g1, g2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidArgumentError
from .geometry import GAUSS, GAUSS_POINTS, ElementGeometry, curvature_coefficients, shape_functions

NDOF = 20

# two Gauss points on each of the bottom, right, top and left edges; the
# edge integrals defining the reduced strains are exact for the quadratic
# tangential traces that occur here
EDGE_SAMPLES = [
    (-GAUSS, -1.0), (GAUSS, -1.0),
    (1.0, -GAUSS), (1.0, GAUSS),
    (GAUSS, 1.0), (-GAUSS, 1.0),
    (-1.0, GAUSS), (-1.0, -GAUSS),
]
SHEAR_SAMPLES = EDGE_SAMPLES

# membrane dofs: the edge samples, then the 2x2 rule for the interior shear
MEMBRANE_SAMPLES = EDGE_SAMPLES + GAUSS_POINTS


@dataclass(frozen=True)
class Material:
    E: float
    nu: float
    t: float

    def __post_init__(self):
        if self.E <= 0 or self.t <= 0 or not 0.0 <= self.nu < 0.5:
            raise InvalidArgumentError(f"invalid material {self}")

    @property
    def G(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    def membrane_matrix(self) -> np.ndarray:
        nu = self.nu
        return self.E * self.t / (1 - nu**2) * np.array([[1, nu, 0], [nu, 1, 0], [0, 0, 2 * (1 - nu)]])

    def bending_matrix(self) -> np.ndarray:
        return self.membrane_matrix() * self.t**2 / 12.0


class Reduction(str, Enum):
    NONE = "none"
    SHEAR = "shear"
    SHEAR_AND_MEMBRANE = "shear_and_membrane"


@dataclass(frozen=True)
class Formulation:
    reduction: Reduction = Reduction.SHEAR
    stabilization: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "reduction", Reduction(self.reduction))
        if self.stabilization is not None and self.stabilization <= 0:
            raise InvalidArgumentError("stabilization parameter must be positive")

    @classmethod
    def from_name(cls, name: str, stabilization: float | None = None) -> "Formulation":
        table = {"disp4": Reduction.NONE, "mitc4c": Reduction.SHEAR, "mitc4s": Reduction.SHEAR_AND_MEMBRANE}
        key = name.strip().lower()
        if key not in table:
            raise InvalidArgumentError(f"unknown formulation {name!r}; expected one of {sorted(table)}")
        return cls(table[key], stabilization)

    @property
    def label(self) -> str:
        base = {Reduction.NONE: "DISP4", Reduction.SHEAR: "MITC4C", Reduction.SHEAR_AND_MEMBRANE: "MITC4S"}
        name = base[self.reduction]
        if self.stabilization is not None:
            name = f"Stab. {name} (alpha={self.stabilization:g})"
        return name

    @property
    def key(self) -> str:
        name = {Reduction.NONE: "disp4", Reduction.SHEAR: "mitc4c", Reduction.SHEAR_AND_MEMBRANE: "mitc4s"}
        s = name[self.reduction]
        return s if self.stabilization is None else f"{s}+stab{self.stabilization:g}"


DISP4 = Formulation(Reduction.NONE)
MITC4C = Formulation(Reduction.SHEAR)
MITC4S = Formulation(Reduction.SHEAR_AND_MEMBRANE)


@dataclass
class StrainOperators:
    membrane: np.ndarray  # (..., 3, 20)
    bending: np.ndarray  # (..., 3, 20)
    shear: np.ndarray  # (..., 2, 20)


def strain_operators(geom: ElementGeometry, curvature: np.ndarray, xi: float, eta: float) -> StrainOperators:
    """Membrane, bending and transverse shear strain-displacement operators."""
    n, _ = shape_functions(xi, eta)
    dn, _ = geom.gradients(xi, eta)  # (..., 2, 4)
    b = np.asarray(curvature)
    b11, b12, b22 = b[..., 0, 0, None], b[..., 0, 1, None], b[..., 1, 1, None]
    d1, d2 = dn[..., 0, :], dn[..., 1, :]
    batch = dn.shape[:-2]

    Bm = np.zeros(batch + (3, 4, 5))
    Bm[..., 0, :, 0] = d1
    Bm[..., 0, :, 2] = -b11 * n
    Bm[..., 1, :, 1] = d2
    Bm[..., 1, :, 2] = -b22 * n
    Bm[..., 2, :, 0] = 0.5 * d2
    Bm[..., 2, :, 1] = 0.5 * d1
    Bm[..., 2, :, 2] = -b12 * n

    Bs = np.zeros(batch + (2, 4, 5))
    Bs[..., 0, :, 0] = b11 * n
    Bs[..., 0, :, 1] = b12 * n
    Bs[..., 0, :, 2] = d1
    Bs[..., 0, :, 3] = n
    Bs[..., 1, :, 0] = b12 * n
    Bs[..., 1, :, 1] = b22 * n
    Bs[..., 1, :, 2] = d2
    Bs[..., 1, :, 4] = n

    Bb = np.zeros(batch + (3, 4, 5))
    Bb[..., 0, :, 1] = -b12 * d1
    Bb[..., 0, :, 2] = b12 * b12 * n
    Bb[..., 0, :, 3] = d1
    Bb[..., 1, :, 0] = -b12 * d2
    Bb[..., 1, :, 2] = b12 * b12 * n
    Bb[..., 1, :, 4] = d2
    Bb[..., 2, :, 0] = -0.5 * b11 * d2
    Bb[..., 2, :, 1] = -0.5 * b22 * d1
    Bb[..., 2, :, 2] = 0.5 * (b11 + b22) * b12 * n
    Bb[..., 2, :, 3] = 0.5 * d2
    Bb[..., 2, :, 4] = 0.5 * d1

    return StrainOperators(
        membrane=Bm.reshape(batch + (3, NDOF)),
        bending=Bb.reshape(batch + (3, NDOF)),
        shear=Bs.reshape(batch + (2, NDOF)),
    )


def project_shear(samples: np.ndarray, geom: ElementGeometry, xi: float, eta: float) -> np.ndarray:
    """Covariant edge interpolation of transverse shear strains.

    ``samples`` (..., 8, 2, k) holds Cartesian shear components at
    ``SHEAR_SAMPLES``; any trailing column count ``k`` is accepted, so both
    operators and sampled fields can be projected.  The edge averages of
    the tangential covariant components fix the reduced field, returned as
    Cartesian components (..., 2, k) at ``(xi, eta)``.
    """
    cov = []
    for edge, col in enumerate((0, 1, 0, 1)):  # d/dxi along bottom/top, d/deta along right/left
        acc = 0.0
        for p in (2 * edge, 2 * edge + 1):
            x, y = SHEAR_SAMPLES[p]
            acc = acc + np.einsum("...i,...ik->...k", geom.jacobian(x, y)[..., :, col], samples[..., p, :, :])
        cov.append(0.5 * acc)
    bottom, right, top, left = cov
    g_xi = 0.5 * (1.0 - eta) * bottom + 0.5 * (1.0 + eta) * top
    g_eta = 0.5 * (1.0 - xi) * left + 0.5 * (1.0 + xi) * right
    cov_pt = np.stack([g_xi, g_eta], axis=-2)
    inv_t = np.linalg.inv(geom.jacobian(xi, eta)).swapaxes(-1, -2)
    return inv_t @ cov_pt


def _pull_back(jbar: np.ndarray) -> np.ndarray:
    """Rows map (e11, e22, e12) to (tau11, tau22, tau12) with tau = Jbar^T e Jbar."""
    a1, a2 = jbar[..., 0, 0], jbar[..., 1, 0]
    c1, c2 = jbar[..., 0, 1], jbar[..., 1, 1]
    return np.stack(
        [
            np.stack([a1 * a1, a2 * a2, 2 * a1 * a2], axis=-1),
            np.stack([c1 * c1, c2 * c2, 2 * c1 * c2], axis=-1),
            np.stack([a1 * c1, a2 * c2, a1 * c2 + a2 * c1], axis=-1),
        ],
        axis=-2,
    )


def _push_forward(jbar: np.ndarray) -> np.ndarray:
    """Rows map (tau11, tau22, tau12) to (e11, e22, e12) with e = G^T tau G, G = Jbar^-1."""
    G = np.linalg.inv(jbar)
    g11, g12, g21, g22 = G[..., 0, 0], G[..., 0, 1], G[..., 1, 0], G[..., 1, 1]
    # e_ij = sum_kl G_ki tau_kl G_lj
    return np.stack(
        [
            np.stack([g11 * g11, g21 * g21, 2 * g11 * g21], axis=-1),
            np.stack([g12 * g12, g22 * g22, 2 * g12 * g22], axis=-1),
            np.stack([g11 * g12, g21 * g22, g11 * g22 + g21 * g12], axis=-1),
        ],
        axis=-2,
    )


def project_membrane(samples: np.ndarray, geom: ElementGeometry, xi: float, eta: float) -> np.ndarray:
    """Reduced membrane strains from samples at ``MEMBRANE_SAMPLES``.

    ``samples`` (..., 12, 3, k) are Cartesian ``(e11, e22, e12)`` values.
    The field is pulled back with the midpoint Jacobian, its four edge
    normal-strain averages and the mean of the reference shear component
    fix the reduced field, which is pushed forward with the same Jacobian.
    """
    jbar = geom.jbar
    tau = np.einsum("...ij,...pjk->...pik", _pull_back(jbar), samples)
    bottom = tau[..., 0:2, 0, :].mean(axis=-2)
    right = tau[..., 2:4, 1, :].mean(axis=-2)
    top = tau[..., 4:6, 0, :].mean(axis=-2)
    left = tau[..., 6:8, 1, :].mean(axis=-2)
    shear = tau[..., 8:12, 2, :].mean(axis=-2)
    t11 = 0.5 * (1.0 - eta) * bottom + 0.5 * (1.0 + eta) * top
    t22 = 0.5 * (1.0 - xi) * left + 0.5 * (1.0 + xi) * right
    return _push_forward(jbar) @ np.stack([t11, t22, shear], axis=-2)


def stabilized_shear_modulus(material: Material, h: np.ndarray | float, alpha: float | None) -> np.ndarray | float:
    """Shear modulus scaled by t^2 / (t^2 + alpha h^2)."""
    if alpha is None:
        return material.G
    if alpha <= 0:
        raise InvalidArgumentError("stabilization parameter must be positive")
    t2 = material.t**2
    return t2 / (t2 + alpha * np.asarray(h) ** 2) * material.G


def _operators_at(geom, normals, reduction: Reduction):
    """Strain operators at the 2x2 Gauss points with the requested reductions."""
    ops = []
    for xi, eta in GAUSS_POINTS:
        ops.append(strain_operators(geom, curvature_coefficients(geom, normals, xi, eta), xi, eta))
    if reduction in (Reduction.SHEAR, Reduction.SHEAR_AND_MEMBRANE):
        tying = np.stack(
            [
                strain_operators(geom, curvature_coefficients(geom, normals, x, y), x, y).shear
                for x, y in SHEAR_SAMPLES
            ],
            axis=-3,
        )
        for op, (xi, eta) in zip(ops, GAUSS_POINTS):
            op.shear = project_shear(tying, geom, xi, eta)
    if reduction is Reduction.SHEAR_AND_MEMBRANE:
        sampled = []
        for k, (x, y) in enumerate(MEMBRANE_SAMPLES):
            if k >= 8:
                sampled.append(ops[k - 8].membrane)
            else:
                sampled.append(strain_operators(geom, curvature_coefficients(geom, normals, x, y), x, y).membrane)
        sampled = np.stack(sampled, axis=-3)
        projected = [project_membrane(sampled, geom, xi, eta) for xi, eta in GAUSS_POINTS]
        for op, pm in zip(ops, projected):
            op.membrane = pm
    return ops


def element_stiffness(
    formulation: Formulation, geom: ElementGeometry, normals: np.ndarray, material: Material
) -> np.ndarray:
    """Element stiffness matrices (..., 20, 20) by 2x2 Gauss quadrature."""
    Dm = material.membrane_matrix()
    Db = material.bending_matrix()
    G = stabilized_shear_modulus(material, geom.h, formulation.stabilization)
    ds = np.asarray(G) * material.t
    K = 0.0
    for op, (xi, eta) in zip(_operators_at(geom, normals, formulation.reduction), GAUSS_POINTS):
        _, det = geom.gradients(xi, eta)
        Bm, Bb, Bs = op.membrane, op.bending, op.shear
        k = (
            Bm.swapaxes(-1, -2) @ (Dm @ Bm)
            + Bb.swapaxes(-1, -2) @ (Db @ Bb)
            + np.asarray(ds)[..., None, None] * (Bs.swapaxes(-1, -2) @ Bs)
        )
        K = K + det[..., None, None] * k
    return 0.5 * (K + np.swapaxes(K, -1, -2))


def element_strains(
    formulation: Formulation, geom: ElementGeometry, normals: np.ndarray, dofs: np.ndarray
) -> list[StrainOperators]:
    """Strains (e, k, g) at the four Gauss points for element dof vectors (..., 20)."""
    out = []
    for op in _operators_at(geom, normals, formulation.reduction):
        out.append(
            StrainOperators(
                membrane=np.einsum("...ij,...j->...i", op.membrane, dofs),
                bending=np.einsum("...ij,...j->...i", op.bending, dofs),
                shear=np.einsum("...ij,...j->...i", op.shear, dofs),
            )
        )
    return out


EDGE_CORNERS = [(0, 1), (1, 2), (2, 3), (3, 0)]


def element_load(
    geom: ElementGeometry,
    surface: np.ndarray | None = None,
    edges: list[tuple[int, np.ndarray]] | None = None,
) -> np.ndarray:
    """Consistent nodal load vectors (..., 20).

    ``surface`` gives ``(f1, f2, p, tau1, tau2)`` per unit area in the
    element frame, either constant (5,) or per element (..., 5).  Each entry
    of ``edges`` is ``(k, values)`` for a line load on local edge ``k``,
    with ``values`` (..., 2, 5) per unit length at the two Gauss points of
    the edge (ordered from corner k to corner k+1) or constant (..., 5).
    """
    batch = geom.xy.shape[:-2]
    f = np.zeros(batch + (4, 5))
    if surface is not None:
        surface = np.broadcast_to(np.asarray(surface, dtype=float), batch + (5,))
        for xi, eta in GAUSS_POINTS:
            n, _ = shape_functions(xi, eta)
            _, det = geom.gradients(xi, eta)
            f += (det[..., None, None] * n[:, None]) * surface[..., None, :]
    for k, values in edges or []:
        a, b = EDGE_CORNERS[k]
        values = np.asarray(values, dtype=float)
        if values.shape[-2:] != (2, 5):
            values = np.broadcast_to(values[..., None, :], values.shape[:-1] + (2, 5))
        values = np.broadcast_to(values, batch + (2, 5))
        length = np.linalg.norm(geom.xy[..., b, :] - geom.xy[..., a, :], axis=-1)
        for q, s in enumerate((-GAUSS, GAUSS)):
            w = 0.5 * length[..., None]  # unit Gauss weights, ds = L/2 du
            f[..., a, :] += w * 0.5 * (1.0 - s) * values[..., q, :]
            f[..., b, :] += w * 0.5 * (1.0 + s) * values[..., q, :]
    return f.reshape(batch + (NDOF,))


def surface_load_from_vector(geom: ElementGeometry, force: np.ndarray) -> np.ndarray:
    """Decompose a global force per unit area into (f1, f2, p, 0, 0)."""
    comps = geom.to_local(np.broadcast_to(force, geom.origin.shape))
    return np.concatenate([comps, np.zeros(comps.shape[:-1] + (2,))], axis=-1)


def line_load_from_vectors(frame: np.ndarray, force: np.ndarray, moment: np.ndarray) -> np.ndarray:
    """(f1, f2, p, tau1, tau2) of a line force and line moment (global vectors).

    A moment vector m works on the normal rotation omega = i3 x theta, so its
    conjugate in theta is tau = m x i3.
    """
    i3 = frame[..., 2, :]
    tau = np.cross(moment, i3)
    f = np.einsum("...ij,...j->...i", frame, force)
    t = np.einsum("...ij,...j->...i", frame[..., :2, :], tau)
    return np.concatenate([f, t], axis=-1)
