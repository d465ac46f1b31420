"""Finite element spaces, quadrature, vertex sampling and assembly kernels.

Every velocity element used by the schemes factors locally into scalar
shape functions times constant direction vectors: the plain quadratic и
mini elements carry the two coordinate directions per scalar function,
and the reduced-quadratic element adds one scalar bubble per edge whose
direction is the edge's global unit normal.  Assembly therefore runs one
generic code path over ``(scalar factor, direction)`` pairs; the
divergence, convection and coupling kernels below never special-case an
element.

Scalar fields (pressure, stress components, the auxiliary trace) use
piecewise constants or continuous piecewise linears.  Tensor fields are
stored component-blocked as ``[xx | xy | yy]`` with each block a scalar
field, which is what lets the implicit stress solves share one scalar
matrix across components.

The vertex-sampling interpolant ``pi_h`` replaces a nonlinear expression
by the piecewise linear function matching it at mesh vertices; combined
with the lumped (vertex) quadrature rule it integrates products of
nonlinear functions of P1 fields exactly as the lumped scheme prescribes.

Quadrature rules are symmetric tabulated rules up to degree 5 and
collapsed-square Gauss product rules beyond; every rule is validated in
the test suite against closed-form monomial integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .meshing import TriMesh

__all__ = [
    "QuadratureRule",
    "triangle_rule",
    "gauss01",
    "SupportError",
    "DiscreteField",
    "build_space",
    "VelocitySpace",
    "ScalarSpace",
    "StressSpace",
    "VELOCITY_KINDS",
    "pi_h",
    "lumped_weights",
    "lumped_mass_integrate",
    "p1_at_points",
    "assemble",
    "velocity_mass",
    "velocity_stiffness",
    "convection_matrix",
    "divergence_matrix",
    "velocity_load",
    "grad_coupling_load",
    "cell_mean_gradient",
    "cell_mean_velocity",
    "vertex_weighted_gradient",
    "evaluate_velocity",
    "evaluate_velocity_gradient",
    "scalar_mass",
    "scalar_stiffness",
    "pressure_integral_vector",
    "inf_sup_estimate",
    "lumped_norm_equivalence_constant",
]


class SupportError(RuntimeError):
    """Requested operation exceeds the supported (desk-scale) problem size."""


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points and weights; weights sum to 1 and are scaled by
    the cell area at use, so ``integral = area * sum(w * f(x))``."""

    degree: int
    points: np.ndarray
    weights: np.ndarray


def _orbit(a: float) -> list[tuple[float, float, float]]:
    b = 0.5 * (1.0 - a)
    return [(a, b, b), (b, a, b), (b, b, a)]


_TABULATED: dict[int, tuple[list, list]] = {
    1: ([(1 / 3, 1 / 3, 1 / 3)], [1.0]),
    2: (_orbit(2 / 3), [1 / 3] * 3),
    4: (_orbit(0.108103018168070) + _orbit(0.816847572980459),
        [0.223381589678011] * 3 + [0.109951743655322] * 3),
    5: ([(1 / 3, 1 / 3, 1 / 3)]
        + _orbit(0.059715871789770) + _orbit(0.797426985353087),
        [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3),
}


def gauss01(n: int):
    """Gauss-Legendre nodes/weights on [0, 1] (weights sum to 1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_rule(degree: int) -> QuadratureRule:
    """Smallest shipped rule exact for polynomials of the given degree."""
    if degree <= 5:
        for deg in (1, 2, 4, 5):
            if deg >= degree:
                pts, w = _TABULATED[deg]
                return QuadratureRule(deg, np.array(pts), np.array(w))
    # collapsed-square product rule: x = a, y = b (1 - a), jacobian (1 - a)
    n = (degree + 3) // 2
    a, wa = gauss01(n)
    b, wb = gauss01(n)
    A, B = np.meshgrid(a, b, indexing="ij")
    WA, WB = np.meshgrid(wa, wb, indexing="ij")
    x = A.ravel()
    y = (B * (1.0 - A)).ravel()
    w = 2.0 * (WA * WB * (1.0 - A)).ravel()
    pts = np.column_stack([1.0 - x - y, x, y])
    return QuadratureRule(degree, pts, w)


# ---------------------------------------------------------------------------
# scalar shape function families
#
# Each family evaluates at arbitrary barycentric coordinates lam (..., 3)
# and returns values (..., nloc) and barycentric derivatives (..., nloc, 3).


def _p1_val(lam):
    return np.asarray(lam, float).copy()


def _p1_dbary(lam):
    lam = np.asarray(lam, float)
    out = np.zeros(lam.shape[:-1] + (3, 3))
    out[...] = np.eye(3)
    return out


def _p2_val(lam):
    lam = np.asarray(lam, float)
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    return np.stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1,
    ], axis=-1)


def _p2_dbary(lam):
    lam = np.asarray(lam, float)
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    z = np.zeros_like(l0)
    rows = [
        [4 * l0 - 1, z, z],
        [z, 4 * l1 - 1, z],
        [z, z, 4 * l2 - 1],
        [z, 4 * l2, 4 * l1],
        [4 * l2, z, 4 * l0],
        [4 * l1, 4 * l0, z],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def _p1b_val(lam):
    lam = np.asarray(lam, float)
    bub = 27.0 * lam[..., 0] * lam[..., 1] * lam[..., 2]
    return np.concatenate([lam, bub[..., None]], axis=-1)


def _p1b_dbary(lam):
    lam = np.asarray(lam, float)
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    out = np.zeros(lam.shape[:-1] + (4, 3))
    out[..., :3, :] = np.eye(3)
    out[..., 3, 0] = 27.0 * l1 * l2
    out[..., 3, 1] = 27.0 * l0 * l2
    out[..., 3, 2] = 27.0 * l0 * l1
    return out


def _edge_bubble_val(lam):
    lam = np.asarray(lam, float)
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    return np.stack([l1 * l2, l2 * l0, l0 * l1], axis=-1)


def _edge_bubble_dbary(lam):
    lam = np.asarray(lam, float)
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    z = np.zeros_like(l0)
    rows = [[z, l2, l1], [l2, z, l0], [l1, l0, z]]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


# ---------------------------------------------------------------------------
# spaces


@dataclass
class DiscreteField:
    """A coefficient vector tied to its space."""

    space: object
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, float)
        if self.values.shape[0] != self.space.n_dofs:
            raise ValueError(
                f"coefficient length {self.values.shape[0]} does not match "
                f"{self.space.kind} with {self.space.n_dofs} dofs")


class VelocitySpace:
    """Vector-valued velocity space with no-flow Dirichlet bookkeeping.

    Attributes
    ----------
    cell_dofs : (n_cells, nloc) global dof indices
    cell_dirs : (n_cells, nloc, 2) constant direction of each local dof
    dirichlet_mask : (n_dofs,) True on boundary-attached dofs
    degree : polynomial degree of the scalar factors
    """

    def __init__(self, mesh: TriMesh, kind: str):
        self.mesh = mesh
        self.kind = kind
        n_p, n_c, n_e = mesh.n_vertices, mesh.n_cells, mesh.n_edges
        bvert = mesh.is_boundary_vertex
        bedge = mesh.is_boundary_edge

        if kind in ("velocity_p2", "velocity_mini", "velocity_p1"):
            if kind == "velocity_p2":
                self._val, self._dbary = _p2_val, _p2_dbary
                self.degree = 2
                scalar_dofs = np.hstack([mesh.cells, n_p + mesh.cell_edges])
                n_s = n_p + n_e
                sc_boundary = np.concatenate([bvert, bedge])
            elif kind == "velocity_mini":
                self._val, self._dbary = _p1b_val, _p1b_dbary
                self.degree = 3
                scalar_dofs = np.hstack(
                    [mesh.cells, n_p + np.arange(n_c)[:, None]])
                n_s = n_p + n_c
                sc_boundary = np.concatenate([bvert, np.zeros(n_c, bool)])
            else:
                self._val, self._dbary = _p1_val, _p1_dbary
                self.degree = 1
                scalar_dofs = mesh.cells
                n_s = n_p
                sc_boundary = bvert
            nloc_s = scalar_dofs.shape[1]
            self.n_dofs = 2 * n_s
            self.nloc = 2 * nloc_s
            self.cell_dofs = np.hstack([scalar_dofs, n_s + scalar_dofs])
            dirs = np.zeros((n_c, self.nloc, 2))
            dirs[:, :nloc_s, 0] = 1.0
            dirs[:, nloc_s:, 1] = 1.0
            self.cell_dirs = dirs
            self.dirichlet_mask = np.concatenate([sc_boundary, sc_boundary])
            self.vertex_dof_x = np.arange(n_p)
            self.vertex_dof_y = n_s + np.arange(n_p)
            self._scalar_repeat = 2

        elif kind == "velocity_p2_reduced":
            # linear vector part plus one quadratic normal bubble per edge
            self.degree = 2
            self.n_dofs = 2 * n_p + n_e
            self.nloc = 9
            self.cell_dofs = np.hstack(
                [mesh.cells, n_p + mesh.cells, 2 * n_p + mesh.cell_edges])
            dirs = np.zeros((n_c, 9, 2))
            dirs[:, 0:3, 0] = 1.0
            dirs[:, 3:6, 1] = 1.0
            dirs[:, 6:9, :] = mesh.edge_normals[mesh.cell_edges]
            self.cell_dirs = dirs
            self.dirichlet_mask = np.concatenate([bvert, bvert, bedge])
            self.vertex_dof_x = np.arange(n_p)
            self.vertex_dof_y = n_p + np.arange(n_p)
            self._scalar_repeat = None
        else:
            raise ValueError(f"unknown velocity kind {kind!r}")

    def scalar_val(self, lam) -> np.ndarray:
        """Scalar factors of all local dofs at barycentric points."""
        if self.kind == "velocity_p2_reduced":
            p1 = _p1_val(lam)
            eb = _edge_bubble_val(lam)
            return np.concatenate([p1, p1, eb], axis=-1)
        v = self._val(lam)
        return np.concatenate([v, v], axis=-1)

    def scalar_dbary(self, lam) -> np.ndarray:
        if self.kind == "velocity_p2_reduced":
            p1 = _p1_dbary(lam)
            eb = _edge_bubble_dbary(lam)
            return np.concatenate([p1, p1, eb], axis=-2)
        d = self._dbary(lam)
        return np.concatenate([d, d], axis=-2)

    def vertex_values(self, coeffs) -> np.ndarray:
        """Velocity at mesh vertices, shape (n_vertices, 2).

        Exact for every shipped element: bubbles vanish at vertices.
        """
        coeffs = np.asarray(coeffs, float)
        return np.column_stack(
            [coeffs[self.vertex_dof_x], coeffs[self.vertex_dof_y]])


class ScalarSpace:
    """Piecewise constant or continuous piecewise linear scalar space."""

    def __init__(self, mesh: TriMesh, kind: str):
        self.mesh = mesh
        self.kind = kind
        if kind in ("pressure_p1", "trace_p1"):
            self.degree = 1
            self.n_dofs = mesh.n_vertices
            self.cell_dofs = mesh.cells
            self._val, self._dbary = _p1_val, _p1_dbary
        elif kind == "pressure_p0":
            self.degree = 0
            self.n_dofs = mesh.n_cells
            self.cell_dofs = np.arange(mesh.n_cells)[:, None]
            self._val = lambda lam: np.ones(np.shape(lam)[:-1] + (1,))
            self._dbary = lambda lam: np.zeros(np.shape(lam)[:-1] + (1, 3))
        else:
            raise ValueError(f"unknown scalar kind {kind!r}")
        self.nloc = self.cell_dofs.shape[1]

    def val(self, lam) -> np.ndarray:
        return self._val(lam)

    def dbary(self, lam) -> np.ndarray:
        return self._dbary(lam)


class StressSpace:
    """Symmetric tensor space stored component-blocked [xx | xy | yy]."""

    def __init__(self, mesh: TriMesh, kind: str):
        self.mesh = mesh
        self.kind = kind
        if kind == "stress_p1_sym":
            self.scalar_count = mesh.n_vertices
            self.degree = 1
        elif kind == "stress_p0_sym":
            self.scalar_count = mesh.n_cells
            self.degree = 0
        else:
            raise ValueError(f"unknown stress kind {kind!r}")
        self.n_dofs = 3 * self.scalar_count

    def block(self, values, component: int) -> np.ndarray:
        """View of one component block of a flat coefficient vector."""
        n = self.scalar_count
        return np.asarray(values)[component * n:(component + 1) * n]


VELOCITY_KINDS = (
    "velocity_p2", "velocity_p2_reduced", "velocity_mini", "velocity_p1")


def build_space(mesh: TriMesh, kind: str):
    """Construct the degree-of-freedom map for one of the shipped spaces.

    ``velocity_p1`` exists only as the classical unstable negative control
    for the inf-sup test utility; the schemes reject it.
    """
    if kind in VELOCITY_KINDS:
        return VelocitySpace(mesh, kind)
    if kind in ("pressure_p0", "pressure_p1", "trace_p1"):
        return ScalarSpace(mesh, kind)
    if kind in ("stress_p0_sym", "stress_p1_sym"):
        return StressSpace(mesh, kind)
    raise ValueError(f"unknown space kind {kind!r}")


# ---------------------------------------------------------------------------
# vertex sampling and lumped integration


def pi_h(mesh: TriMesh, f):
    """Vertex-sampling interpolant onto P1.

    ``f`` is either a callable of vertex coordinate arrays ``(x, y)`` or
    an array of per-vertex values (returned unchanged, so the interpolant
    is idempotent on P1 data).
    """
    if callable(f):
        out = np.asarray(
            f(mesh.vertices[:, 0], mesh.vertices[:, 1]), float)
    else:
        out = np.asarray(f, float)
    if out.shape[0] != mesh.n_vertices:
        raise ValueError("vertex value array has wrong length")
    return out.copy()


def lumped_weights(mesh: TriMesh) -> np.ndarray:
    """Vertex quadrature weights: w_p = sum of |K|/3 over cells at p."""
    w = np.zeros(mesh.n_vertices)
    np.add.at(w, mesh.cells.ravel(),
              np.repeat(mesh.cell_areas / 3.0, 3))
    return w


def lumped_mass_integrate(mesh: TriMesh, expr) -> float:
    """Integral of the vertex interpolant, i.e. the lumped (vertex) rule.

    Exact for P1 integrands.  ``expr`` is a callable of vertex coordinates
    or an array of per-vertex values.
    """
    vals = pi_h(mesh, expr)
    return float(lumped_weights(mesh) @ vals)


def p1_at_points(mesh: TriMesh, vertex_vals, lam) -> np.ndarray:
    """Evaluate a P1 field (scalar or stacked components) at barycentric
    points, returning shape (n_cells, nq, ...)."""
    vertex_vals = np.asarray(vertex_vals, float)
    cellwise = vertex_vals[mesh.cells]  # (M, 3, ...)
    lam = np.asarray(lam, float)
    return np.einsum("qj,kj...->kq...", lam, cellwise)


# ---------------------------------------------------------------------------
# assembly kernels


def _to_csr(cellvals, rows_dofs, cols_dofs, shape):
    m, nr, nc = cellvals.shape
    rows = np.repeat(rows_dofs, nc, axis=1).ravel()
    cols = np.tile(cols_dofs, (1, nr)).ravel()
    mat = sp.coo_matrix((cellvals.ravel(), (rows, cols)), shape=shape)
    return mat.tocsr()


def _quad_data(mesh: TriMesh, v: VelocitySpace, rule: QuadratureRule):
    sval = v.scalar_val(rule.points)                    # (nq, nloc)
    dbar = v.scalar_dbary(rule.points)                  # (nq, nloc, 3)
    gx = np.einsum("qlj,kjd->klqd", dbar, mesh.bary_grads)
    return sval.T, gx                                   # (nloc, nq), (M, nloc, nq, 2)


def velocity_mass(mesh: TriMesh, v: VelocitySpace, degree: int | None = None):
    rule = triangle_rule(degree if degree is not None else 2 * v.degree)
    sval, _ = _quad_data(mesh, v, rule)
    s2 = np.einsum("iq,jq,q->ij", sval, sval, rule.weights)
    dd = np.einsum("kid,kjd->kij", v.cell_dirs, v.cell_dirs)
    cellvals = dd * s2[None] * mesh.cell_areas[:, None, None]
    return _to_csr(cellvals, v.cell_dofs, v.cell_dofs, (v.n_dofs, v.n_dofs))


def velocity_stiffness(mesh: TriMesh, v: VelocitySpace, degree: int | None = None):
    rule = triangle_rule(degree if degree is not None else
                         max(2 * (v.degree - 1), 2 * v.degree - 2, 1))
    _, gx = _quad_data(mesh, v, rule)
    e = np.einsum("kiqd,kjqd,q->kij", gx, gx, rule.weights)
    dd = np.einsum("kid,kjd->kij", v.cell_dirs, v.cell_dirs)
    cellvals = e * dd * mesh.cell_areas[:, None, None]
    return _to_csr(cellvals, v.cell_dofs, v.cell_dofs, (v.n_dofs, v.n_dofs))


def evaluate_velocity(mesh: TriMesh, v: VelocitySpace, coeffs, lam) -> np.ndarray:
    """Velocity values at barycentric points, shape (n_cells, nq, 2)."""
    sval = v.scalar_val(lam)                             # (nq, nloc)
    c = np.asarray(coeffs, float)[v.cell_dofs]           # (M, nloc)
    return np.einsum("kl,ql,kld->kqd", c, sval, v.cell_dirs)


def evaluate_velocity_gradient(mesh: TriMesh, v: VelocitySpace, coeffs, lam):
    """Velocity gradients (du_a/dx_b) at barycentric points, (M, nq, 2, 2)."""
    dbar = v.scalar_dbary(lam)
    gx = np.einsum("qlj,kjd->klqd", dbar, mesh.bary_grads)
    c = np.asarray(coeffs, float)[v.cell_dofs]
    return np.einsum("kl,kla,klqb->kqab", c, v.cell_dirs, gx)


def convection_matrix(mesh: TriMesh, v: VelocitySpace, w_coeffs,
                      degree: int | None = None):
    """Skew-symmetrized convection with a frozen transport velocity w:

        c(w; u, phi) = 1/2 * integral( ((w.grad)u).phi - ((w.grad)phi).u )

    The assembled matrix satisfies C + C^T = 0 identically because both
    halves are built from the same quadrature sums.
    """
    rule = triangle_rule(degree if degree is not None else 3 * v.degree - 1)
    sval, gx = _quad_data(mesh, v, rule)
    wq = evaluate_velocity(mesh, v, w_coeffs, rule.points)   # (M, nq, 2)
    adv = np.einsum("kqd,klqd->klq", wq, gx)                 # w . grad s_l
    dd = np.einsum("kid,kjd->kij", v.cell_dirs, v.cell_dirs)
    t = np.einsum("kjq,iq,q->kij", adv, sval, rule.weights)
    t = t * dd * mesh.cell_areas[:, None, None]
    cellvals = 0.5 * (t - np.swapaxes(t, 1, 2))
    return _to_csr(cellvals, v.cell_dofs, v.cell_dofs, (v.n_dofs, v.n_dofs))


def divergence_matrix(mesh: TriMesh, v: VelocitySpace, p: ScalarSpace,
                      degree: int | None = None):
    """B[q, i] = integral( psi_q * div(phi_i) ), shape (n_p, n_u)."""
    rule = triangle_rule(degree if degree is not None else
                         max(v.degree - 1 + p.degree, 1))
    _, gx = _quad_data(mesh, v, rule)
    div = np.einsum("kid,kiqd->kiq", v.cell_dirs, gx)
    pval = p.val(rule.points)                             # (nq, nloc_p)
    cellvals = np.einsum("qa,kiq,q->kai", pval, div, rule.weights)
    cellvals = cellvals * mesh.cell_areas[:, None, None]
    return _to_csr(cellvals, p.cell_dofs, v.cell_dofs, (p.n_dofs, v.n_dofs))


def _physical_points(mesh: TriMesh, lam):
    p = mesh.vertices[mesh.cells]          # (M, 3, 2)
    return np.einsum("qj,kjd->kqd", np.asarray(lam, float), p)


def velocity_load(mesh: TriMesh, v: VelocitySpace, f, degree: int = 6):
    """Load vector integral( f . phi_i ) for a callable f(x, y) -> (fx, fy)."""
    rule = triangle_rule(degree)
    sval, _ = _quad_data(mesh, v, rule)
    xq = _physical_points(mesh, rule.points)
    fx, fy = f(xq[..., 0], xq[..., 1])
    fq = np.stack(np.broadcast_arrays(fx, fy), axis=-1)   # (M, nq, 2)
    fd = np.einsum("kqd,kld->klq", fq, v.cell_dirs)
    cellvals = np.einsum("klq,lq,q->kl", fd, sval, rule.weights)
    cellvals = cellvals * mesh.cell_areas[:, None]
    out = np.zeros(v.n_dofs)
    np.add.at(out, v.cell_dofs.ravel(), cellvals.ravel())
    return out


def grad_coupling_load(mesh: TriMesh, v: VelocitySpace, values, where: str):
    """Vector of integral( W : grad(phi_i) ) for a symmetric tensor field W.

    ``where`` selects the representation of ``W``: ``"cell"`` for a
    piecewise constant field of shape (n_cells, 3) or ``"vertex"`` for a
    P1 field of shape (n_vertices, 3) (the vertex-sampled interpolant).
    Exact for both, since the integrand is polynomial.
    """
    values = np.asarray(values, float)
    if where == "cell":
        rule = triangle_rule(max(v.degree - 1, 1))
        wq3 = np.broadcast_to(values[:, None, :],
                              (mesh.n_cells, len(rule.weights), 3))
    elif where == "vertex":
        rule = triangle_rule(v.degree)
        wq3 = p1_at_points(mesh, values, rule.points)     # (M, nq, 3)
    else:
        raise ValueError("where must be 'cell' or 'vertex'")
    _, gx = _quad_data(mesh, v, rule)
    # d^T W g with W in (xx, xy, yy) components
    wxx, wxy, wyy = wq3[..., 0], wq3[..., 1], wq3[..., 2]
    dx, dy = v.cell_dirs[..., 0], v.cell_dirs[..., 1]
    gxq, gyq = gx[..., 0], gx[..., 1]
    val = (dx[:, :, None] * (wxx[:, None] * gxq + wxy[:, None] * gyq)
           + dy[:, :, None] * (wxy[:, None] * gxq + wyy[:, None] * gyq))
    cellvals = np.einsum("klq,q->kl", val, rule.weights) * mesh.cell_areas[:, None]
    out = np.zeros(v.n_dofs)
    np.add.at(out, v.cell_dofs.ravel(), cellvals.ravel())
    return out


def cell_mean_gradient(mesh: TriMesh, v: VelocitySpace, coeffs) -> np.ndarray:
    """Per-cell integral of the velocity gradient, shape (n_cells, 2, 2)."""
    rule = triangle_rule(max(v.degree - 1, 1))
    g = evaluate_velocity_gradient(mesh, v, coeffs, rule.points)
    return np.einsum("kqab,q->kab", g, rule.weights) * mesh.cell_areas[:, None, None]


def cell_mean_velocity(mesh: TriMesh, v: VelocitySpace, coeffs) -> np.ndarray:
    """Per-cell integral of the velocity, shape (n_cells, 2)."""
    rule = triangle_rule(v.degree)
    u = evaluate_velocity(mesh, v, coeffs, rule.points)
    return np.einsum("kqd,q->kd", u, rule.weights) * mesh.cell_areas[:, None]


def vertex_weighted_gradient(mesh: TriMesh, v: VelocitySpace, coeffs) -> np.ndarray:
    """G_p = integral( eta_p * grad u ), shape (n_vertices, 2, 2).

    This is the hat-function moment of the velocity gradient that the
    lumped deformation terms contract against vertex tensor values.
    """
    rule = triangle_rule(v.degree)  # eta (deg 1) * grad u (deg v.degree - 1)
    g = evaluate_velocity_gradient(mesh, v, coeffs, rule.points)
    hat = rule.points  # (nq, 3): the three hat functions at the points
    cellvals = np.einsum("qj,kqab,q->kjab", hat, g, rule.weights)
    cellvals = cellvals * mesh.cell_areas[:, None, None, None]
    out = np.zeros((mesh.n_vertices, 2, 2))
    np.add.at(out, mesh.cells.ravel(), cellvals.reshape(-1, 2, 2))
    return out


def scalar_mass(mesh: TriMesh, s: ScalarSpace, degree: int | None = None):
    rule = triangle_rule(degree if degree is not None else max(2 * s.degree, 1))
    val = s.val(rule.points)
    m = np.einsum("qi,qj,q->ij", val, val, rule.weights)
    cellvals = m[None] * mesh.cell_areas[:, None, None]
    return _to_csr(cellvals, s.cell_dofs, s.cell_dofs, (s.n_dofs, s.n_dofs))


def scalar_stiffness(mesh: TriMesh):
    """P1 stiffness matrix integral( grad q . grad r )."""
    g = mesh.bary_grads                                   # (M, 3, 2)
    cellvals = np.einsum("kid,kjd->kij", g, g) * mesh.cell_areas[:, None, None]
    return _to_csr(cellvals, mesh.cells, mesh.cells,
                   (mesh.n_vertices, mesh.n_vertices))


def pressure_integral_vector(mesh: TriMesh, p: ScalarSpace) -> np.ndarray:
    """Vector of integral( psi_q ), used for the zero-mean constraint."""
    if p.degree == 0:
        return mesh.cell_areas.copy()
    return lumped_weights(mesh)  # exact for P1


_FORMS = {
    "mass": velocity_mass,
    "stiffness": velocity_stiffness,
    "convection": convection_matrix,
    "divergence": divergence_matrix,
    "load": velocity_load,
    "grad_coupling": grad_coupling_load,
    "scalar_mass": scalar_mass,
    "scalar_stiffness": scalar_stiffness,
}


def assemble(mesh: TriMesh, form: str, *args, **kwargs):
    """Dispatch into the fixed catalogue of bilinear/linear forms."""
    try:
        fn = _FORMS[form]
    except KeyError:
        raise ValueError(f"unknown form {form!r}; catalogue: {sorted(_FORMS)}") from None
    return fn(mesh, *args, **kwargs)


# ---------------------------------------------------------------------------
# diagnostics


def inf_sup_estimate(mesh: TriMesh, velocity_kind: str, pressure_kind: str) -> float:
    """Numerical inf-sup constant of a velocity/pressure pairing.

    Returns the smallest nonzero generalized singular value of the
    divergence coupling against the H1 velocity norm and the L2 pressure
    norm, restricted to homogeneous velocity data and mean-zero pressures.
    Dense linear algebra; intended as a desk-scale test utility and
    guarded accordingly.
    """
    import scipy.linalg as la
    from scipy.sparse.linalg import splu

    v = VelocitySpace(mesh, velocity_kind)
    p = ScalarSpace(mesh, pressure_kind)
    if v.n_dofs > 6000 or p.n_dofs > 1500:
        raise SupportError(
            "inf_sup_estimate is a dense test utility; use meshes with "
            "n <= 16")
    free = ~v.dirichlet_mask
    x_mat = (velocity_stiffness(mesh, v) + velocity_mass(mesh, v)).tocsr()
    x_ff = x_mat[free][:, free].tocsc()
    b = divergence_matrix(mesh, v, p).tocsr()[:, free]
    lu = splu(x_ff)
    z = lu.solve(b.toarray().T)                      # X^{-1} B^T
    s_mat = b @ z
    m_p = scalar_mass(mesh, p).toarray()
    eigs = la.eigh(0.5 * (s_mat + s_mat.T), m_p, eigvals_only=True)
    # the constant pressure is in the kernel; the next eigenvalue is mu^2
    return float(math.sqrt(max(eigs[1], 0.0)))


def lumped_norm_equivalence_constant(mesh: TriMesh) -> float:
    """Largest ratio of the lumped to the consistent P1 L2 norm squared.

    Equals the largest generalized eigenvalue of the lumped against the
    consistent mass matrix (4 in exact arithmetic on any triangulation,
    attained on mean-zero local modes).  Dense; test utility.
    """
    import scipy.linalg as la

    if mesh.n_vertices > 1500:
        raise SupportError("dense test utility; use small meshes")
    s = ScalarSpace(mesh, "pressure_p1")
    mc = scalar_mass(mesh, s).toarray()
    ml = np.diag(lumped_weights(mesh))
    eigs = la.eigh(ml, mc, eigvals_only=True)
    return float(eigs[-1])
