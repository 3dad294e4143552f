"""Field evaluation, error norms, stability norms and convergence rates."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .assembly import Params, _curl_coefs, _div_coefs, _tri_geometry
from .linsolve import SolutionFields
from .mesh import Mesh
from .problems import ProblemCase
from .quadrature import edge_rule, subdivide_triangle_rule, triangle_rule

__all__ = [
    "ErrorReport",
    "penalty_sweep",
    "evaluate_fe",
    "nodal_interpolant",
    "l2_errors",
    "triple_norm",
    "boundary_data_norm",
    "convergence_rate",
]

_P1_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


@dataclass
class ErrorReport:
    """One refinement level of a convergence study."""

    h: float
    err_u: float
    err_curl: float
    err_p: float
    dofs: int
    triple: float | None = None
    data_norm: float | None = None
    wall_ms: float = 0.0


def _coeffs(sol) -> np.ndarray:
    return sol.coeffs if isinstance(sol, SolutionFields) else np.asarray(sol, float)


def evaluate_fe(mesh: Mesh, sol, point) -> tuple[float, float, float, float]:
    """(u1, u2, p, curl_u) at a point located by brute barycentric scan."""
    x = _coeffs(sol)
    pt = np.asarray(point, dtype=float)
    area, _, grads = _tri_geometry(mesh.vertices[mesh.triangles])
    v0 = mesh.vertices[mesh.triangles[:, 0]]
    lam = np.empty((mesh.n_triangles, 3))
    offs = pt[None, :] - v0
    for i in range(3):
        lam[:, i] = (1.0 if i == 0 else 0.0) + (grads[:, i] * offs).sum(axis=1)
    inside = np.all(lam >= -1e-12, axis=1)
    if not inside.any():
        raise ValueError(f"point {point} lies outside the mesh")
    t = int(np.argmax(inside))
    nodal = x.reshape(-1, 3)[mesh.triangles[t]]  # (3, [ux, uy, p])
    vals = lam[t] @ nodal
    udofs = np.empty(6)
    udofs[0::2] = nodal[:, 0]
    udofs[1::2] = nodal[:, 1]
    curl = float(_curl_coefs(grads[t : t + 1])[0] @ udofs)
    return float(vals[0]), float(vals[1]), float(vals[2]), curl


def nodal_interpolant(mesh: Mesh, case: ProblemCase) -> np.ndarray:
    """Coefficients of the vertex interpolant of the exact solution."""
    u = case.exact_u(mesh.vertices)
    out = np.zeros(3 * mesh.n_vertices)
    out[0::3] = u[:, 0]
    out[1::3] = u[:, 1]
    return out


def _quad_rule_for(case: ProblemCase, degree: int, subdivide: int | None):
    if subdivide is None:
        subdivide = 1 if case.singularity_n == 1 else 0
    rule = triangle_rule(degree)
    return subdivide_triangle_rule(rule, subdivide) if subdivide else rule


def l2_errors(
    mesh: Mesh,
    sol,
    case: ProblemCase,
    degree: int = 6,
    subdivide: int | None = None,
    curl_degree: int = 1,
) -> ErrorReport:
    """Error norms of a discrete solution against the exact fields.

    |u - u_h|^2 and |p_h|^2 are integrated with an elementwise rule of the
    given degree; singular cases get one extra uniform quadrature
    subdivision per element by default so the corner elements are
    integrated adequately.

    The curl error is measured at the element Gauss points (one centroid
    point by default). Since the discrete curl is elementwise constant,
    this is the natural discrete curl-error measure; on criss-cross and
    Powell-Sabin meshes the centroid values are superconvergent, which a
    full-quadrature norm of the piecewise-constant curl cannot see (it is
    bounded below by the piecewise-constant approximation error of the
    exact curl). Pass curl_degree=6 for the saturated norm instead.
    """
    x = _coeffs(sol)
    rule = _quad_rule_for(case, degree, subdivide)
    coords = mesh.vertices[mesh.triangles]
    _, _, grads = _tri_geometry(coords)

    pts = np.einsum("qk,mkd->mqd", rule.points, coords)
    flat = pts.reshape(-1, 2)
    u_ex = case.exact_u(flat).reshape(pts.shape)

    nodal = x.reshape(-1, 3)[mesh.triangles]  # (m, 3, 3)
    vals_h = np.einsum("qk,mkf->mqf", rule.points, nodal)
    udofs = np.empty((mesh.n_triangles, 6))
    udofs[:, 0::2] = nodal[:, :, 0]
    udofs[:, 1::2] = nodal[:, :, 1]
    c_h = np.einsum("ma,ma->m", _curl_coefs(grads), udofs)

    w2a = 2.0 * mesh.tri_area
    du = ((u_ex - vals_h[:, :, :2]) ** 2).sum(axis=2)
    err_u = np.sqrt(np.einsum("m,q,mq->", w2a, rule.weights, du))
    err_p = np.sqrt(np.einsum("m,q,mq->", w2a, rule.weights, vals_h[:, :, 2] ** 2))

    crule = triangle_rule(curl_degree)
    cpts = np.einsum("qk,mkd->mqd", crule.points, coords)
    c_ex = case.exact_curl_u(cpts.reshape(-1, 2)).reshape(cpts.shape[:2])
    dc = (c_ex - c_h[:, None]) ** 2
    err_c = np.sqrt(np.einsum("m,q,mq->", w2a, crule.weights, dc))
    return ErrorReport(mesh.h, float(err_u), float(err_c), float(err_p), 3 * mesh.n_vertices)


def triple_norm(mesh: Mesh, sol, params: Params) -> float:
    """Mesh-dependent stability norm of a discrete pair [v, q]:

    nu ||c(v)||^2 + (nu/L0^2) ||v||^2 + (L0^2/nu) ||grad q||^2
      + nu sum_K (h_K^2/L0^2) ||div v||_K^2
      + sum_e (nu/h_e) ||t(v)||_e^2 + sum_e (L0^2/(nu h_e)) ||q||_e^2
    """
    x = _coeffs(sol)
    coords = mesh.vertices[mesh.triangles]
    area, h_k, grads = _tri_geometry(coords)
    nodal = x.reshape(-1, 3)[mesh.triangles]
    udofs = np.empty((mesh.n_triangles, 6))
    udofs[:, 0::2] = nodal[:, :, 0]
    udofs[:, 1::2] = nodal[:, :, 1]

    curl = np.einsum("ma,ma->m", _curl_coefs(grads), udofs)
    div = np.einsum("ma,ma->m", _div_coefs(grads), udofs)
    gradq = np.einsum("mid,mi->md", grads, nodal[:, :, 2])

    nu, l0 = params.nu, params.L0
    total = nu * (area * curl**2).sum()
    total += nu * (h_k**2 / l0**2 * area * div**2).sum()
    total += (l0**2 / nu) * (area * (gradq**2).sum(axis=1)).sum()
    for comp in range(2):
        vals = nodal[:, :, comp]
        total += (nu / l0**2) * (area * np.einsum("mi,ij,mj->m", vals, _P1_MASS, vals)).sum()

    mass2 = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    ev = mesh.edge_vertices
    tvecs = np.column_stack([-mesh.edge_normal[:, 1], mesh.edge_normal[:, 0]])
    uverts = x.reshape(-1, 3)[:, :2]
    tvals = np.einsum("kd,kid->ki", tvecs, uverts[ev])  # t(v) at edge endpoints
    qvals = x.reshape(-1, 3)[:, 2][ev]
    eint_t = mesh.edge_length * np.einsum("ki,ij,kj->k", tvals, mass2, tvals)
    eint_q = mesh.edge_length * np.einsum("ki,ij,kj->k", qvals, mass2, qvals)
    total += (nu / mesh.edge_local_h * eint_t).sum()
    total += (l0**2 / (nu * mesh.edge_local_h) * eint_q).sum()
    return float(total)


def boundary_data_norm(mesh: Mesh, case: ProblemCase, params: Params) -> float:
    """||f||_L2 + sqrt(nu/h) ||t(ubar)||_L2(boundary), the data functional
    scale against which the solution's triple norm is compared."""
    rule = triangle_rule(6)
    coords = mesh.vertices[mesh.triangles]
    pts = np.einsum("qk,mkd->mqd", rule.points, coords)
    f = case.source_f(pts.reshape(-1, 2)).reshape(pts.shape)
    f_norm = np.sqrt(
        np.einsum("m,q,mq->", 2.0 * mesh.tri_area, rule.weights, (f**2).sum(axis=2))
    )

    erule = edge_rule(11)
    p0 = mesh.vertices[mesh.edge_vertices[:, 0]]
    p1 = mesh.vertices[mesh.edge_vertices[:, 1]]
    epts = p0[:, None, :] + erule.points[None, :, None] * (p1 - p0)[:, None, :]
    ubar = case.dirichlet_u(epts.reshape(-1, 2)).reshape(epts.shape)
    tu = (
        mesh.edge_normal[:, None, 0] * ubar[:, :, 1]
        - mesh.edge_normal[:, None, 1] * ubar[:, :, 0]
    )
    t_norm = np.sqrt((mesh.edge_length[:, None] * erule.weights * tu**2).sum())
    return float(f_norm + np.sqrt(params.nu / mesh.h) * t_norm)


def convergence_rate(coarse: ErrorReport, fine: ErrorReport, field: str = "err_u") -> float:
    """log(e_coarse/e_fine) / log(h_coarse/h_fine) between two levels."""
    e_c, e_f = getattr(coarse, field), getattr(fine, field)
    if fine.h >= coarse.h:
        raise ValueError("fine level must have smaller h")
    if e_c <= 0.0 or e_f <= 0.0:
        raise ValueError("rates need strictly positive errors")
    return float(np.log(e_c / e_f) / np.log(coarse.h / fine.h))


def penalty_sweep(mesh: Mesh, params: Params, case, decades=range(-3, 5)) -> float | None:
    """Smallest power of ten for N_u = N_p making the test-flipped quadratic
    form positive semi-definite, or None if no probed decade is stable.

    Diagnostic for choosing the boundary penalty constants: the form is
    evaluated by the smallest eigenvalue of the symmetrised flipped matrix,
    so meshes should be kept coarse.
    """
    from dataclasses import replace

    from .assembly import assemble_global

    for decade in decades:
        n = 10.0**decade
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            system = assemble_global(mesh, replace(params, N_u=n, N_p=n), case)
        flip = np.ones(system.dofmap.n_dofs)
        flip[2::3] = -1.0
        m = system.matrix.multiply(flip).toarray()
        lam_min = np.linalg.eigvalsh(0.5 * (m + m.T)).min()
        if lam_min >= -1e-10 * np.abs(m).max():
            return float(n)
    return None
