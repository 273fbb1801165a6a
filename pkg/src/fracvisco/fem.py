"""Lagrange P1/P2 vector elements on triangles for linear elasticity forms.

Provides triangle quadrature (conical product rules of arbitrary degree),
scalar shape functions in barycentric coordinates, a vector-valued finite
element space with component-blocked dof layout (all x components first,
then all y components), and assembly of the mass matrix, the elasticity
stiffness matrix, load vectors, error norms and the energy projection.

The bilinear form is a(w, v) = int D_hat eps(w) : eps(v) with
D_hat eps = 2 mu_hat eps + lambda_hat tr(eps) I, so mu_hat = 1/2 and
lambda_hat = 0 make D_hat the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .linalg import SparseMatrix, cg_solve, eliminate_dirichlet, from_triplets
from .mesh import Mesh, SIDES


@dataclass(frozen=True)
class Material:
    """Density and the coefficients of the rescaled elasticity tensor."""

    rho: float = 1.0
    lambda_hat: float = 0.0
    mu_hat: float = 0.5
    alpha: float = 0.5

    def __post_init__(self):
        if self.rho <= 0.0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.mu_hat <= 0.0:
            raise ValueError(f"mu_hat must be positive, got {self.mu_hat}")
        if self.lambda_hat < 0.0:
            raise ValueError(f"lambda_hat must be nonnegative, got {self.lambda_hat}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the reference triangle, exact to `degree`.

    points are barycentric rows (nq, 3); weights sum to 1/2 (the area of
    the reference triangle) and are all positive.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)


_rule_cache: dict = {}


def triangle_rule(degree: int) -> QuadratureRule:
    """Conical product rule on the reference triangle.

    Gauss-Jacobi (weight 1-x) in the first direction times Gauss-Legendre
    in the second, via the Duffy-style map (x, t) -> (x, t(1-x)).  With n
    points per direction the rule is exact for polynomials of total degree
    2n-1, using n = ceil((degree+1)/2).
    """
    if degree < 0:
        raise ValueError(f"degree must be nonnegative, got {degree}")
    degree = max(degree, 1)
    if degree in _rule_cache:
        return _rule_cache[degree]
    n = (degree + 2) // 2
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = roots_legendre(n)
    u = 0.5 * (xj + 1.0)        # nodes in (0,1), weight (1-u)
    wu = 0.25 * wj
    v = 0.5 * (xl + 1.0)
    wv = 0.5 * wl
    xi = np.repeat(u, n)
    eta = np.tile(v, n) * (1.0 - xi)
    w = (wu[:, None] * wv[None, :]).ravel()
    bary = np.column_stack([1.0 - xi - eta, xi, eta])
    rule = QuadratureRule(points=bary, weights=w, degree=2 * n - 1)
    _rule_cache[degree] = rule
    return rule


_REF_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def shape_values(degree: int, bary: np.ndarray) -> np.ndarray:
    """Scalar shape functions at barycentric points; shape (nq, nloc)."""
    lam = np.asarray(bary)
    if degree == 1:
        return lam.copy()
    if degree == 2:
        vert = lam * (2.0 * lam - 1.0)
        e0 = 4.0 * lam[:, 1] * lam[:, 2]
        e1 = 4.0 * lam[:, 2] * lam[:, 0]
        e2 = 4.0 * lam[:, 0] * lam[:, 1]
        return np.column_stack([vert, e0, e1, e2])
    raise ValueError(f"unsupported polynomial degree {degree}")


def shape_gradients(degree: int, bary: np.ndarray) -> np.ndarray:
    """Reference-coordinate shape gradients; shape (nq, nloc, 2)."""
    lam = np.asarray(bary)
    nq = lam.shape[0]
    if degree == 1:
        return np.broadcast_to(_REF_GRADS, (nq, 3, 2)).copy()
    if degree == 2:
        out = np.empty((nq, 6, 2))
        for i in range(3):
            out[:, i] = (4.0 * lam[:, i] - 1.0)[:, None] * _REF_GRADS[i]
        for k, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
            out[:, 3 + k] = 4.0 * (lam[:, a, None] * _REF_GRADS[b]
                                   + lam[:, b, None] * _REF_GRADS[a])
        return out
    raise ValueError(f"unsupported polynomial degree {degree}")


class FeSpace:
    """Vector P1 or P2 Lagrange space with homogeneous Dirichlet sides.

    Scalar dofs sit at vertices (P1) or vertices plus edge midpoints (P2).
    Vector dofs are component blocked: dof a*n_scalar + i is component a
    at scalar node i.
    """

    def __init__(self, mesh: Mesh, degree: int, dirichlet_sides=SIDES):
        if degree not in (1, 2):
            raise ValueError(f"unsupported polynomial degree {degree}")
        sides = tuple(dirichlet_sides)
        unknown = set(sides) - set(SIDES)
        if unknown:
            raise ValueError(f"unknown side tags {sorted(unknown)}")
        self.mesh = mesh
        self.degree = degree
        self.dirichlet_sides = sides

        nv = mesh.n_vertices
        tris = mesh.triangles
        if degree == 1:
            self.n_scalar = nv
            self.element_dofs = tris.astype(np.int64)
            self.dof_coords = mesh.vertices.copy()
            self.edges = {}
        else:
            edges: dict = {}
            edofs = np.empty((mesh.n_triangles, 6), dtype=np.int64)
            edofs[:, :3] = tris
            for t, tri in enumerate(tris):
                for k, (a, b) in enumerate(((tri[1], tri[2]), (tri[2], tri[0]),
                                            (tri[0], tri[1]))):
                    key = (int(min(a, b)), int(max(a, b)))
                    eid = edges.get(key)
                    if eid is None:
                        eid = len(edges)
                        edges[key] = eid
                    edofs[t, 3 + k] = nv + eid
            self.n_scalar = nv + len(edges)
            self.element_dofs = edofs
            mids = np.array([(mesh.vertices[a] + mesh.vertices[b]) * 0.5
                             for (a, b) in edges], dtype=np.float64)
            self.dof_coords = (np.vstack([mesh.vertices, mids]) if len(edges)
                               else mesh.vertices.copy())
            self.edges = edges

        self.n_dofs = 2 * self.n_scalar
        self.dirichlet_scalar = self._scalar_dirichlet_dofs()
        self.dirichlet_dofs = np.concatenate(
            [self.dirichlet_scalar, self.dirichlet_scalar + self.n_scalar])
        self._geom = None
        self._unit_mass = None

    def _scalar_dirichlet_dofs(self) -> np.ndarray:
        if not self.dirichlet_sides:
            return np.zeros(0, dtype=np.int64)
        xmin, xmax, ymin, ymax = self.mesh.bounds()
        x, y = self.dof_coords[:, 0], self.dof_coords[:, 1]
        tol = 1e-12 * max(xmax - xmin, ymax - ymin, 1.0)
        on = np.zeros(len(x), dtype=bool)
        if "left" in self.dirichlet_sides:
            on |= np.abs(x - xmin) <= tol
        if "right" in self.dirichlet_sides:
            on |= np.abs(x - xmax) <= tol
        if "bottom" in self.dirichlet_sides:
            on |= np.abs(y - ymin) <= tol
        if "top" in self.dirichlet_sides:
            on |= np.abs(y - ymax) <= tol
        return np.nonzero(on)[0].astype(np.int64)

    @property
    def neumann_sides(self) -> tuple:
        return tuple(s for s in SIDES if s not in self.dirichlet_sides)

    def geometry(self):
        """Cached per-element affine data: (Jinv, detJ, X) with
        Jinv[t, c, d] the inverse Jacobian and detJ = 2 * area."""
        if self._geom is None:
            X = self.mesh.vertices[self.mesh.triangles]  # (nt, 3, 2)
            J = np.stack([X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]], axis=-1)
            detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            if not (detJ > 0.0).all():
                raise ValueError("mesh contains inverted triangles")
            Jinv = np.empty_like(J)
            Jinv[:, 0, 0] = J[:, 1, 1]
            Jinv[:, 0, 1] = -J[:, 0, 1]
            Jinv[:, 1, 0] = -J[:, 1, 0]
            Jinv[:, 1, 1] = J[:, 0, 0]
            Jinv /= detJ[:, None, None]
            self._geom = (Jinv, detJ, X)
        return self._geom

    def interpolate(self, field) -> np.ndarray:
        """Nodal interpolation of a vector field (x, y) -> (..., 2)."""
        vals = np.asarray(field(self.dof_coords[:, 0], self.dof_coords[:, 1]))
        if vals.shape != (self.n_scalar, 2):
            raise ValueError(f"field returned shape {vals.shape}, "
                             f"expected {(self.n_scalar, 2)}")
        return np.concatenate([vals[:, 0], vals[:, 1]])

    def quadrature_data(self, quad_degree: int):
        """Rule plus per-element basis data at the rule points.

        Returns (weights, N, G, xq, detJ) with N (nq, nloc) shape values,
        G (nt, nq, nloc, 2) physical gradients, xq (nt, nq, 2) points.
        """
        rule = triangle_rule(quad_degree)
        N = shape_values(self.degree, rule.points)
        dN = shape_gradients(self.degree, rule.points)
        Jinv, detJ, X = self.geometry()
        G = np.einsum("tcd,qic->tqid", Jinv, dN)
        xq = np.einsum("qv,tvd->tqd", rule.points, X)
        return rule.weights, N, G, xq, detJ


def _default_degree(space: FeSpace) -> int:
    return 2 * space.degree + 2


def _block_triplets(space: FeSpace, blocks) -> SparseMatrix:
    """Assemble 2x2 element blocks into the global vector matrix.

    blocks is a dict {(a, b): (nt, nloc, nloc) array} of component blocks.
    """
    ns = space.n_scalar
    edofs = space.element_dofs
    nloc = edofs.shape[1]
    rows_parts, cols_parts, vals_parts = [], [], []
    rr = np.broadcast_to(edofs[:, :, None], (edofs.shape[0], nloc, nloc))
    cc = np.broadcast_to(edofs[:, None, :], (edofs.shape[0], nloc, nloc))
    for (a, b), data in blocks.items():
        rows_parts.append((rr + a * ns).ravel())
        cols_parts.append((cc + b * ns).ravel())
        vals_parts.append(data.ravel())
    return from_triplets(space.n_dofs, space.n_dofs,
                         (np.concatenate(rows_parts), np.concatenate(cols_parts),
                          np.concatenate(vals_parts)))


def assemble_mass(space: FeSpace, rho: float = 1.0, quad_degree: int | None = None) -> SparseMatrix:
    """Vector mass matrix weighted by the density rho."""
    if rho <= 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    deg = quad_degree if quad_degree is not None else _default_degree(space)
    rule = triangle_rule(deg)
    N = shape_values(space.degree, rule.points)
    _, detJ, _ = space.geometry()
    Mref = np.einsum("q,qi,qj->ij", rule.weights, N, N)
    Me = (rho * detJ)[:, None, None] * Mref[None, :, :]
    return _block_triplets(space, {(0, 0): Me, (1, 1): Me})


def assemble_stiffness(space: FeSpace, material: Material,
                       quad_degree: int | None = None) -> SparseMatrix:
    """Stiffness matrix of a(w, v) = int D_hat eps(w) : eps(v)."""
    deg = quad_degree if quad_degree is not None else _default_degree(space)
    w, _, G, _, detJ = space.quadrature_data(deg)
    mu, lam = material.mu_hat, material.lambda_hat
    Gx = G[..., 0]
    Gy = G[..., 1]

    def inner(P, Q):
        return np.einsum("q,t,tqi,tqj->tij", w, detJ, P, Q)

    Ixx = inner(Gx, Gx)
    Iyy = inner(Gy, Gy)
    Ixy = inner(Gx, Gy)   # Ixy[t, i, j] = int dphi_i/dx dphi_j/dy
    Iyx = Ixy.transpose(0, 2, 1)
    Kxx = (2.0 * mu + lam) * Ixx + mu * Iyy
    Kyy = (2.0 * mu + lam) * Iyy + mu * Ixx
    Kxy = mu * Iyx + lam * Ixy
    Kyx = Kxy.transpose(0, 2, 1)
    return _block_triplets(space, {(0, 0): Kxx, (0, 1): Kxy,
                                   (1, 0): Kyx, (1, 1): Kyy})


def _eval_vector_field(f, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    vals = np.asarray(f(x, y), dtype=np.float64)
    want = x.shape + (2,)
    if vals.shape != want:
        raise ValueError(f"vector field returned shape {vals.shape}, expected {want}")
    return vals


def assemble_load(space: FeSpace, f=None, gN=None, quad_degree: int | None = None) -> np.ndarray:
    """Load vector of F(v) = int f . v + int_GammaN gN . v.

    f and gN are callables (x, y) -> (..., 2); either may be None.  gN is
    integrated over the edges of the non-Dirichlet sides with Gauss rules
    of matching degree; passing gN when every side is Dirichlet is an error.
    """
    deg = quad_degree if quad_degree is not None else _default_degree(space)
    ns = space.n_scalar
    F = np.zeros(space.n_dofs)

    if f is not None:
        rule = triangle_rule(deg)
        N = shape_values(space.degree, rule.points)
        _, detJ, X = space.geometry()
        xq = np.einsum("qv,tvd->tqd", rule.points, X)
        fv = _eval_vector_field(f, xq[..., 0], xq[..., 1])
        Ve = np.einsum("q,t,tqa,qi->tia", rule.weights, detJ, fv, N)
        edofs = space.element_dofs
        for a in (0, 1):
            F[a * ns:(a + 1) * ns] += np.bincount(
                edofs.ravel(), weights=Ve[:, :, a].ravel(), minlength=ns)

    if gN is not None:
        neumann = [(e, tag) for e, tag in zip(space.mesh.boundary_edges,
                                              space.mesh.boundary_tags)
                   if tag in space.neumann_sides]
        if not neumann:
            raise ValueError("gN given but every side is Dirichlet")
        npts = max((deg + 2) // 2, 1)
        s_ref, w_ref = roots_legendre(npts)
        s = 0.5 * (s_ref + 1.0)
        ws = 0.5 * w_ref
        for (a_v, b_v), _tag in neumann:
            p0 = space.mesh.vertices[a_v]
            p1 = space.mesh.vertices[b_v]
            length = float(np.linalg.norm(p1 - p0))
            xs = p0[0] + s * (p1[0] - p0[0])
            ys_ = p0[1] + s * (p1[1] - p0[1])
            gv = _eval_vector_field(gN, xs, ys_)
            if space.degree == 1:
                dofs = [int(a_v), int(b_v)]
                phi = np.column_stack([1.0 - s, s])
            else:
                key = (int(min(a_v, b_v)), int(max(a_v, b_v)))
                dofs = [int(a_v), int(b_v), space.mesh.n_vertices + space.edges[key]]
                phi = np.column_stack([(1.0 - s) * (1.0 - 2.0 * s),
                                       s * (2.0 * s - 1.0),
                                       4.0 * s * (1.0 - s)])
            contrib = length * np.einsum("q,qa,qi->ia", ws, gv, phi)
            for a in (0, 1):
                for i, dof in enumerate(dofs):
                    F[a * ns + dof] += contrib[i, a]

    return F


def _element_coeffs(space: FeSpace, U: np.ndarray) -> np.ndarray:
    """Gather global dof values per element; shape (nt, nloc, 2)."""
    ns = space.n_scalar
    edofs = space.element_dofs
    return np.stack([U[edofs], U[ns + edofs]], axis=-1)


def error_norms(space: FeSpace, U: np.ndarray, exact, exact_grad,
                material: Material | None = None,
                quad_degree: int | None = None) -> tuple[float, float, float]:
    """L2, full H1 and energy norms of (u_h - exact).

    exact maps (x, y) to values (..., 2); exact_grad to gradients
    (..., 2, 2) with [i, j] = d(component i)/d(x_j).  Quadrature degree
    defaults to 2k+4.  The energy norm uses the material of the form
    (identity D_hat when omitted).
    """
    U = np.asarray(U, dtype=np.float64)
    if U.shape != (space.n_dofs,):
        raise ValueError(f"coefficient shape {U.shape}, expected {(space.n_dofs,)}")
    if material is None:
        material = Material()
    deg = quad_degree if quad_degree is not None else 2 * space.degree + 4
    w, N, G, xq, detJ = space.quadrature_data(deg)
    Ue = _element_coeffs(space, U)

    uh = np.einsum("tia,qi->tqa", Ue, N)
    ue = _eval_vector_field(exact, xq[..., 0], xq[..., 1])
    e = uh - ue

    guh = np.einsum("tia,tqid->tqad", Ue, G)
    ge_exact = np.asarray(exact_grad(xq[..., 0], xq[..., 1]), dtype=np.float64)
    want = xq.shape[:2] + (2, 2)
    if ge_exact.shape != want:
        raise ValueError(f"gradient field returned shape {ge_exact.shape}, expected {want}")
    ge = guh - ge_exact

    scale = w[None, :] * detJ[:, None]
    l2_sq = float(np.einsum("tq,tqa->", scale, e ** 2))
    grad_sq = float(np.einsum("tq,tqad->", scale, ge ** 2))
    eps = 0.5 * (ge + np.swapaxes(ge, -1, -2))
    tr = eps[..., 0, 0] + eps[..., 1, 1]
    dens = 2.0 * material.mu_hat * np.einsum("tqad->tq", eps ** 2) \
        + material.lambda_hat * tr ** 2
    energy_sq = float(np.einsum("tq,tq->", scale, dens))
    return np.sqrt(l2_sq), np.sqrt(l2_sq + grad_sq), np.sqrt(energy_sq)


def function_l2_norm(space: FeSpace, U: np.ndarray) -> float:
    """L2 norm of the finite element function with coefficients U."""
    if space._unit_mass is None:
        space._unit_mass = assemble_mass(space, 1.0)
    U = np.asarray(U, dtype=np.float64)
    return float(np.sqrt(U @ (space._unit_mass @ U)))


def elliptic_project(space: FeSpace, material: Material, w0_grad,
                     cg_tol: float = 1e-12, quad_degree: int | None = None) -> np.ndarray:
    """Energy projection: find W0 in the space with a(W0, v) = a(w0, v).

    Needs only the gradient of w0, as a callable (x, y) -> (..., 2, 2).
    Constrained dofs are set to zero, so w0 should vanish on the Dirichlet
    sides for the projection to be meaningful there.
    """
    deg = quad_degree if quad_degree is not None else _default_degree(space)
    w, _, G, xq, detJ = space.quadrature_data(deg)
    g0 = np.asarray(w0_grad(xq[..., 0], xq[..., 1]), dtype=np.float64)
    want = xq.shape[:2] + (2, 2)
    if g0.shape != want:
        raise ValueError(f"gradient field returned shape {g0.shape}, expected {want}")
    eps0 = 0.5 * (g0 + np.swapaxes(g0, -1, -2))
    tr0 = eps0[..., 0, 0] + eps0[..., 1, 1]
    mu, lam = material.mu_hat, material.lambda_hat
    # D_hat eps(w0) : eps(phi_i e_a) = (2 mu eps0 + lam tr0 I)[a, :] . grad(phi_i)
    sig = 2.0 * mu * eps0
    sig[..., 0, 0] += lam * tr0
    sig[..., 1, 1] += lam * tr0
    Ve = np.einsum("q,t,tqab,tqib->tia", w, detJ, sig, G)

    ns = space.n_scalar
    rhs = np.zeros(space.n_dofs)
    edofs = space.element_dofs
    for a in (0, 1):
        rhs[a * ns:(a + 1) * ns] += np.bincount(
            edofs.ravel(), weights=Ve[:, :, a].ravel(), minlength=ns)

    K = assemble_stiffness(space, material, quad_degree=deg)
    constrained = [(int(i), 0.0) for i in space.dirichlet_dofs]
    K2, rhs2 = eliminate_dirichlet(K, rhs, constrained)
    x, report = cg_solve(K2, rhs2, tol=cg_tol)
    if not report.converged:
        raise RuntimeError(
            f"projection CG did not converge: residual {report.final_relative_residual:g}")
    return x
