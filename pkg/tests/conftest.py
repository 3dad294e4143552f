"""Shared fixtures and independent oracles for the test suite.

The oracle helpers deliberately avoid the production code paths: P1 basis
functions are recovered by solving small Vandermonde systems and every
integral is evaluated by mapped quadrature on pointwise samples.
"""

import numpy as np
import pytest

from maxnit.quadrature import edge_rule, triangle_rule


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


# --- independent P1 basis -------------------------------------------------


def p1_coefficients(coords):
    """Columns i hold (a, b, c) with lambda_i = a + b x + c y."""
    coords = np.asarray(coords, dtype=float)
    vand = np.column_stack([np.ones(3), coords[:, 0], coords[:, 1]])
    return np.linalg.solve(vand, np.eye(3))


def p1_values(coords, pts):
    coef = p1_coefficients(coords)
    pts = np.atleast_2d(pts)
    return np.column_stack([np.ones(len(pts)), pts[:, 0], pts[:, 1]]) @ coef


def p1_gradients(coords):
    coef = p1_coefficients(coords)
    return coef[1:, :].T  # (3, 2)


def tri_area_of(coords):
    d1 = coords[1] - coords[0]
    d2 = coords[2] - coords[0]
    return 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])


def map_tri_rule(coords, degree=6):
    """Physical quadrature points and weights on one triangle."""
    rule = triangle_rule(degree)
    pts = rule.points @ np.asarray(coords, dtype=float)
    w = rule.weights * 2.0 * tri_area_of(np.asarray(coords, dtype=float))
    return pts, w


# --- oracle local matrices -------------------------------------------------

# the six vector basis fields are ordered (lambda_0, 0), (0, lambda_0), ...


def _vec_basis_samples(coords, pts):
    lam = p1_values(coords, pts)  # (q, 3)
    q = len(pts)
    vals = np.zeros((q, 6, 2))
    for i in range(3):
        vals[:, 2 * i, 0] = lam[:, i]
        vals[:, 2 * i + 1, 1] = lam[:, i]
    return vals


def _vec_basis_curl(coords):
    g = p1_gradients(coords)
    curl = np.zeros(6)
    for i in range(3):
        curl[2 * i] = -g[i, 1]
        curl[2 * i + 1] = g[i, 0]
    return curl


def _vec_basis_div(coords):
    g = p1_gradients(coords)
    div = np.zeros(6)
    for i in range(3):
        div[2 * i] = g[i, 0]
        div[2 * i + 1] = g[i, 1]
    return div


def oracle_curl_curl(coords, nu):
    pts, w = map_tri_rule(coords)
    curl = _vec_basis_curl(coords)
    return nu * w.sum() * np.outer(curl, curl)


def oracle_mixed_grad(coords):
    pts, w = map_tri_rule(coords)
    vec = _vec_basis_samples(coords, pts)  # (q, 6, 2)
    grad = p1_gradients(coords)  # (3, 2)
    return np.einsum("q,qad,jd->aj", w, vec, grad)


def oracle_div_div(coords, params):
    pts, w = map_tri_rule(coords)
    div = _vec_basis_div(coords)
    coords = np.asarray(coords, dtype=float)
    h_k = max(
        np.linalg.norm(coords[1] - coords[0]),
        np.linalg.norm(coords[2] - coords[1]),
        np.linalg.norm(coords[0] - coords[2]),
    )
    scale = params.c_u * params.nu * h_k**2 / params.L0**2
    return scale * w.sum() * np.outer(div, div)


def oracle_pressure_laplacian(coords, params):
    pts, w = map_tri_rule(coords)
    grad = p1_gradients(coords)
    return -(params.L0**2 / params.nu) * w.sum() * (grad @ grad.T)


def oracle_edge_blocks(tri_coords, edge_local, normal, params):
    """Boundary blocks of one edge by mapped Gauss quadrature.

    tri_coords: (3, 2) adjacent triangle, CCW; edge_local: (i, j) local
    vertex indices of the edge so that the interior lies left of i->j.
    Returns blocks in the same (rows, cols) layouts as the production code:
    edge u-dofs are ordered (ux_i, uy_i, ux_j, uy_j).
    """
    tri_coords = np.asarray(tri_coords, dtype=float)
    i, j = edge_local
    p0, p1 = tri_coords[i], tri_coords[j]
    ell = np.linalg.norm(p1 - p0)
    h_k = max(
        np.linalg.norm(tri_coords[1] - tri_coords[0]),
        np.linalg.norm(tri_coords[2] - tri_coords[1]),
        np.linalg.norm(tri_coords[0] - tri_coords[2]),
    )
    rule = edge_rule(7)
    pts = p0[None, :] + rule.points[:, None] * (p1 - p0)[None, :]
    w = rule.weights * ell

    lam = p1_values(tri_coords, pts)  # (q, 3) all three tri functions on the edge
    grad = p1_gradients(tri_coords)
    curl = _vec_basis_curl(tri_coords)

    # traces of the two edge-vertex scalar functions, in edge-local order
    lam_e = lam[:, [i, j]]
    tvec = np.array([-normal[1], normal[0]])

    # t(v) coefficients for the 4 edge u-dofs, per quadrature point
    tv = np.einsum("qi,c->qic", lam_e, tvec).reshape(-1, 4)
    nv = np.einsum("qi,c->qic", lam_e, np.asarray(normal)).reshape(-1, 4)

    cons = -params.nu * np.einsum("q,qa,b->ab", w, tv, curl)  # (4 edge, 6 tri)
    nq = -np.einsum("q,qj,qa->ja", w, lam_e, nv)  # (2 edge p, 4 edge u)
    pen_u = params.N_u * params.nu / h_k * np.einsum("q,qa,qb->ab", w, tv, tv)
    pen_p = -params.N_p * params.L0**2 / (params.nu * h_k) * np.einsum(
        "q,qa,qb->ab", w, lam_e, lam_e
    )
    ndgrad = grad @ np.asarray(normal)
    pflux = (
        params.L0**2
        / params.nu
        * np.einsum("q,qj,a->ja", w, lam_e, ndgrad)  # (2 edge p, 3 tri p)
    )
    return {
        "consistency": cons,
        "normal_flux": nq,
        "penalty_u": pen_u,
        "penalty_p": pen_p,
        "p_flux": pflux,
    }


def random_ccw_triangle(rng, min_area=0.05):
    while True:
        coords = rng.uniform(-1.0, 1.0, size=(3, 2))
        a = tri_area_of(coords)
        if a < -min_area:
            coords = coords[[0, 2, 1]]
            a = -a
        if a > min_area:
            return coords
