"""Element and boundary-edge matrices, global assembly, strong constraints.

Unknowns are nodal and interleaved per vertex as (u_x, u_y, p). The three
formulations share the volume blocks

    curl-curl        nu (c(u), c(v))          c(v) = d1 v2 - d2 v1
    mixed gradient   (grad p, v) + (grad q, u)
    div-div          c_u nu h_K^2 / L0^2 (div u, div v)      [stabilised]
    p-laplacian      -(L0^2/nu) (grad p, grad q)             [stabilised]

and the weak formulations add the boundary terms

    -nu <t(v), c(u)> - nu <t(u), c(v)>        t(v) = n1 v2 - n2 v1
    -<n.u, q> - <n.v, p>
    +N_u (nu/h) <t(v), t(u)>  -  N_p (L0^2/(nu h)) <p, q>
    +(L0^2/nu) [<n.grad p, q> + <p, n.grad q>]   [stabilised, optional]

with h the diameter of the edge's adjacent element. The right-hand side is

    (f, v) - nu <t(ubar), c(v)> + N_u (nu/h) <t(v), t(ubar)>.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from .problems import ProblemCase, SingularPointError
from .quadrature import edge_rule, subdivide_triangle_rule, triangle_rule

__all__ = [
    "FORMULATIONS",
    "CORNER_STRATEGIES",
    "Params",
    "DofMap",
    "LinearSystem",
    "DegenerateTriangleError",
    "local_curl_curl",
    "local_mixed_grad",
    "local_div_div",
    "local_pressure_laplacian",
    "edge_nitsche_blocks",
    "assemble_rhs",
    "assemble_global",
    "apply_strong_bc",
    "write_matrix_market",
]

FORMULATIONS = ("galerkin-nitsche", "stabilised-nitsche", "stabilised-strong")
CORNER_STRATEGIES = ("both-zero", "free", "bisector-normal")

# quadrature for data-dependent right-hand-side terms; bilinear terms are
# polynomial and integrated exactly by construction
RHS_TRI_DEGREE = 10
RHS_TRI_SUBDIV = 1
RHS_EDGE_DEGREE = 11

_PENALTY_WARN_THRESHOLD = 4.0  # ~4 * (unit trace-constant estimate)^2


class DegenerateTriangleError(ValueError):
    pass


@dataclass
class Params:
    """Physical and algorithmic constants plus the formulation selectors."""

    nu: float = 1.0
    L0: float = 1.0
    c_u: float = 1.0
    N_u: float = 100.0
    N_p: float = 100.0
    formulation: str = "stabilised-nitsche"
    corner_strategy: str = "both-zero"
    include_p_flux: bool = True

    def __post_init__(self):
        for name in ("nu", "L0", "c_u"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.N_u < 0.0 or self.N_p < 0.0:
            raise ValueError("penalty constants must be non-negative")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if self.corner_strategy not in CORNER_STRATEGIES:
            raise ValueError(f"unknown corner strategy {self.corner_strategy!r}")
        if self.formulation != "stabilised-strong" and (
            self.N_u < _PENALTY_WARN_THRESHOLD or self.N_p < _PENALTY_WARN_THRESHOLD
        ):
            warnings.warn(
                "penalty constants below the stability threshold estimate; "
                "the discrete problem may be unstable",
                stacklevel=2,
            )


@dataclass(frozen=True)
class DofMap:
    """Interleaved (u_x, u_y, p) unknowns per vertex."""

    n_vertices: int

    @property
    def n_dofs(self) -> int:
        return 3 * self.n_vertices

    def ux(self, v):
        return 3 * np.asarray(v)

    def uy(self, v):
        return 3 * np.asarray(v) + 1

    def p(self, v):
        return 3 * np.asarray(v) + 2

    def u_pair(self, v) -> np.ndarray:
        """[ux(v0), uy(v0), ux(v1), uy(v1), ...] for a vertex list."""
        v = np.asarray(v)
        return np.column_stack([3 * v, 3 * v + 1]).ravel()


@dataclass
class LinearSystem:
    """Sparse symmetric system; strong constraints are held as the affine
    map full = transform @ reduced + offset."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: DofMap
    formulation: str
    transform: sp.csr_matrix | None = None
    offset: np.ndarray | None = None

    @property
    def n_unknowns(self) -> int:
        return self.matrix.shape[0]


def _tri_geometry(coords: np.ndarray):
    """Areas, diameters and P1 gradients for a (m, 3, 2) coordinate batch."""
    coords = np.asarray(coords, dtype=float)
    d1 = coords[:, 1] - coords[:, 0]
    d2 = coords[:, 2] - coords[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    edges = np.stack(
        [coords[:, 2] - coords[:, 1], coords[:, 0] - coords[:, 2], d1], axis=1
    )
    h_k = np.sqrt((edges**2).sum(axis=2)).max(axis=1)
    if np.any(area < 1e-14 * h_k**2):
        raise DegenerateTriangleError("triangle area below the degeneracy floor")
    grads = np.empty((len(coords), 3, 2))
    # grad lambda_i = (y_j - y_k, x_k - x_j) / (2A), cyclic
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = coords[:, j, 1] - coords[:, k, 1]
        grads[:, i, 1] = coords[:, k, 0] - coords[:, j, 0]
    grads /= 2.0 * area[:, None, None]
    return area, h_k, grads


def _curl_coefs(grads: np.ndarray) -> np.ndarray:
    """Element curl of the six nodal vector basis fields, (m, 6)."""
    m = grads.shape[0]
    out = np.empty((m, 6))
    out[:, 0::2] = -grads[:, :, 1]  # (lambda_i, 0) has curl -d2 lambda_i
    out[:, 1::2] = grads[:, :, 0]  # (0, lambda_i) has curl  d1 lambda_i
    return out


def _div_coefs(grads: np.ndarray) -> np.ndarray:
    m = grads.shape[0]
    out = np.empty((m, 6))
    out[:, 0::2] = grads[:, :, 0]
    out[:, 1::2] = grads[:, :, 1]
    return out


def _batch_curl_curl(area, grads, nu):
    c = _curl_coefs(grads)
    return nu * area[:, None, None] * c[:, :, None] * c[:, None, :]


def _batch_div_div(area, h_k, grads, params):
    d = _div_coefs(grads)
    scale = params.c_u * params.nu / params.L0**2 * h_k**2 * area
    return scale[:, None, None] * d[:, :, None] * d[:, None, :]


def _batch_mixed_grad(area, grads):
    # entry[a=2i+c, j] = (area/3) * d_c psi_j, independent of the vertex i
    base = grads.transpose(0, 2, 1) * (area[:, None, None] / 3.0)
    return base[:, [0, 1, 0, 1, 0, 1], :]


def _batch_pressure_laplacian(area, grads, params):
    scale = -(params.L0**2 / params.nu) * area
    return scale[:, None, None] * np.einsum("mid,mjd->mij", grads, grads)


def _single(coords):
    return np.asarray(coords, dtype=float)[None]


def local_curl_curl(tri: np.ndarray, nu: float) -> np.ndarray:
    """6x6 curl-curl block of a CCW triangle given as (3, 2) coordinates."""
    area, _, grads = _tri_geometry(_single(tri))
    return _batch_curl_curl(area, grads, nu)[0]


def local_mixed_grad(tri: np.ndarray) -> np.ndarray:
    """6x3 coupling (v, grad p); its transpose couples (u, grad q)."""
    area, _, grads = _tri_geometry(_single(tri))
    return _batch_mixed_grad(area, grads)[0]


def local_div_div(tri: np.ndarray, params: Params) -> np.ndarray:
    area, h_k, grads = _tri_geometry(_single(tri))
    return _batch_div_div(area, h_k, grads, params)[0]


def local_pressure_laplacian(tri: np.ndarray, params: Params) -> np.ndarray:
    area, _, grads = _tri_geometry(_single(tri))
    return _batch_pressure_laplacian(area, grads, params)[0]


def _edge_mass(length: float) -> np.ndarray:
    return length / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])


def edge_nitsche_blocks(mesh: Mesh, e: int, params: Params):
    """All boundary contributions of edge `e` as (rows, cols, block) triples
    in global dof indices. The five consistency/penalty terms are always
    present; the two pressure-flux terms only for the stabilised form."""
    if params.formulation == "stabilised-strong":
        return []
    dofs = DofMap(mesh.n_vertices)
    v0, v1 = mesh.edge_vertices[e]
    tri_id = int(mesh.edge_tri[e])
    tri = mesh.triangles[tri_id]
    n = mesh.edge_normal[e]
    ell = float(mesh.edge_length[e])
    lh = float(mesh.edge_local_h[e])

    area, _, grads = _tri_geometry(mesh.vertices[tri][None])
    curl6 = _curl_coefs(grads)[0]

    tvec = np.array([-n[1], n[0]])  # coefficient of t(v) per component
    t4 = np.concatenate([tvec, tvec])  # edge dofs ordered ux0, uy0, ux1, uy1
    mass = _edge_mass(ell)

    edge_u = dofs.u_pair([v0, v1])
    edge_p = dofs.p(np.array([v0, v1]))
    tri_u = dofs.u_pair(tri)
    tri_p = dofs.p(tri)

    blocks = []

    cons = -params.nu * (ell / 2.0) * np.outer(t4, curl6)
    blocks.append((edge_u, tri_u, cons))
    blocks.append((tri_u, edge_u, cons.T))

    # <n.u, q>: P1 x P1 edge mass composed with the normal
    nq = -np.kron(mass, n[None, :])
    blocks.append((edge_p, edge_u, nq))
    blocks.append((edge_u, edge_p, nq.T))

    pen_u = params.N_u * params.nu / lh * np.kron(mass, np.outer(tvec, tvec))
    blocks.append((edge_u, edge_u, pen_u))

    pen_p = -params.N_p * params.L0**2 / (params.nu * lh) * mass
    blocks.append((edge_p, edge_p, pen_p))

    if params.formulation == "stabilised-nitsche" and params.include_p_flux:
        ndgrad = grads[0] @ n  # n . grad psi_a, element constant
        pflux = params.L0**2 / params.nu * (ell / 2.0) * np.outer(np.ones(2), ndgrad)
        blocks.append((edge_p, tri_p, pflux))
        blocks.append((tri_p, edge_p, pflux.T))

    return blocks


def _map_rule_points(rule, coords):
    """Physical positions of rule points on every triangle, (m, q, 2)."""
    return np.einsum("qk,mkd->mqd", rule.points, coords)


def _tangential_trace(case_values: np.ndarray, normals: np.ndarray) -> np.ndarray:
    return normals[..., 0] * case_values[..., 1] - normals[..., 1] * case_values[..., 0]


def assemble_rhs(mesh: Mesh, case: ProblemCase, params: Params) -> np.ndarray:
    if case.domain != mesh.domain:
        raise ValueError(f"case domain {case.domain!r} != mesh domain {mesh.domain!r}")
    dofs = DofMap(mesh.n_vertices)
    b = np.zeros(dofs.n_dofs)

    coords = mesh.vertices[mesh.triangles]
    rule = subdivide_triangle_rule(triangle_rule(RHS_TRI_DEGREE), RHS_TRI_SUBDIV)
    pts = _map_rule_points(rule, coords)
    fvals = case.source_f(pts.reshape(-1, 2)).reshape(pts.shape)
    if np.any(fvals):
        # (f, phi_a) with phi the nodal hat functions, both components
        lam = rule.points  # (q, 3) barycentric values are the P1 values
        w = rule.weights
        contrib = 2.0 * mesh.tri_area[:, None, None] * np.einsum(
            "q,qi,mqd->mid", w, lam, fvals
        )
        for i in range(3):
            np.add.at(b, dofs.ux(mesh.triangles[:, i]), contrib[:, i, 0])
            np.add.at(b, dofs.uy(mesh.triangles[:, i]), contrib[:, i, 1])

    if params.formulation == "stabilised-strong":
        return b

    erule = edge_rule(RHS_EDGE_DEGREE)
    t = erule.points
    ew = erule.weights
    p0 = mesh.vertices[mesh.edge_vertices[:, 0]]
    p1 = mesh.vertices[mesh.edge_vertices[:, 1]]
    epts = p0[:, None, :] + t[None, :, None] * (p1 - p0)[:, None, :]
    ubar = case.dirichlet_u(epts.reshape(-1, 2)).reshape(epts.shape)
    tu = _tangential_trace(ubar, mesh.edge_normal[:, None, :])  # (k, q)

    # -nu <t(ubar), c(v)>: element-constant curl, so one moment per edge
    _, _, grads = _tri_geometry(mesh.vertices[mesh.triangles[mesh.edge_tri]])
    curl6 = _curl_coefs(grads)  # (k, 6)
    moment0 = mesh.edge_length * (tu @ ew)
    cons = -params.nu * moment0[:, None] * curl6
    tri_u_dofs = dofs.u_pair(mesh.triangles[mesh.edge_tri].ravel()).reshape(-1, 6)
    np.add.at(b, tri_u_dofs.ravel(), cons.ravel())

    # +N_u (nu/h) <t(v), t(ubar)> over the two edge hat functions
    lam_edge = np.column_stack([1.0 - t, t])  # (q, 2)
    moment1 = mesh.edge_length[:, None] * np.einsum("q,qi,kq->ki", ew, lam_edge, tu)
    scale = params.N_u * params.nu / mesh.edge_local_h
    tvecs = np.column_stack([-mesh.edge_normal[:, 1], mesh.edge_normal[:, 0]])
    pen = scale[:, None, None] * moment1[:, :, None] * tvecs[:, None, :]  # (k, 2, 2)
    edge_u_dofs = dofs.u_pair(mesh.edge_vertices.ravel()).reshape(-1, 4)
    np.add.at(b, edge_u_dofs.ravel(), pen.reshape(-1, 4).ravel())
    return b


def _scatter(rows_blocks, n_dofs) -> sp.csr_matrix:
    rows = np.concatenate([r for r, _, _ in rows_blocks])
    cols = np.concatenate([c for _, c, _ in rows_blocks])
    vals = np.concatenate([v for _, _, v in rows_blocks])
    a = sp.coo_matrix((vals, (rows, cols)), shape=(n_dofs, n_dofs)).tocsr()
    return (a + a.T) * 0.5  # blocks are symmetric; enforce exact symmetry


def assemble_global(mesh: Mesh, params: Params, case: ProblemCase) -> LinearSystem:
    """Full sparse system for the selected formulation."""
    dofs = DofMap(mesh.n_vertices)
    coords = mesh.vertices[mesh.triangles]
    area, h_k, grads = _tri_geometry(coords)

    u_idx = dofs.u_pair(mesh.triangles.ravel()).reshape(-1, 6)
    p_idx = dofs.p(mesh.triangles)

    stabilised = params.formulation in ("stabilised-nitsche", "stabilised-strong")

    uu = _batch_curl_curl(area, grads, params.nu)
    if stabilised:
        uu = uu + _batch_div_div(area, h_k, grads, params)
    up = _batch_mixed_grad(area, grads)

    triplets = []

    def add_batch(rows, cols, blocks):
        r = np.repeat(rows, cols.shape[1], axis=1).ravel()
        c = np.tile(cols, (1, rows.shape[1])).ravel()
        triplets.append((r, c, blocks.ravel()))

    add_batch(u_idx, u_idx, uu)
    add_batch(u_idx, p_idx, up)
    add_batch(p_idx, u_idx, up.transpose(0, 2, 1))
    if stabilised:
        add_batch(p_idx, p_idx, _batch_pressure_laplacian(area, grads, params))

    if params.formulation != "stabilised-strong":
        for e in range(mesh.n_boundary_edges):
            for rows, cols, block in edge_nitsche_blocks(mesh, e, params):
                triplets.append(
                    (
                        np.repeat(rows, len(cols)),
                        np.tile(cols, len(rows)),
                        block.ravel(),
                    )
                )

    matrix = _scatter(triplets, dofs.n_dofs)
    rhs = assemble_rhs(mesh, case, params)
    return LinearSystem(matrix, rhs, dofs, params.formulation)


def _boundary_vertex_info(mesh: Mesh):
    """Incident boundary-edge data per boundary vertex.

    Returns vertex -> (incoming edge index, outgoing edge index) following
    the CCW boundary orientation, so corner convexity can be read off the
    turn direction.
    """
    incoming: dict[int, int] = {}
    outgoing: dict[int, int] = {}
    for e in range(mesh.n_boundary_edges):
        v0, v1 = mesh.edge_vertices[e]
        if int(v1) in incoming or int(v0) in outgoing:
            raise ValueError("boundary vertex with other than two incident segments")
        incoming[int(v1)] = e
        outgoing[int(v0)] = e
    if set(incoming) != set(outgoing):
        raise ValueError("boundary is not a union of closed loops")
    return {v: (incoming[v], outgoing[v]) for v in incoming}


def _dirichlet_value(case: ProblemCase, point: np.ndarray) -> np.ndarray:
    try:
        return np.asarray(case.dirichlet_u(point), dtype=float)
    except SingularPointError:
        return np.zeros(2)  # pin the unbounded corner value to zero


def apply_strong_bc(
    system: LinearSystem, mesh: Mesh, case: ProblemCase, corner_strategy: str
) -> LinearSystem:
    """Eliminate boundary conditions symmetrically.

    On every boundary vertex p is set to zero. At vertices interior to a
    straight segment the (u_x, u_y) pair is rotated to normal/tangential
    coordinates and the tangential value is prescribed. Convex corners get
    both components prescribed from the boundary data, which is consistent
    there; the requested strategy is applied at re-entrant corners, where
    the nodal tangent is genuinely ambiguous.
    """
    if corner_strategy not in CORNER_STRATEGIES:
        raise ValueError(f"unknown corner strategy {corner_strategy!r}")
    dofs = system.dofmap
    n_full = dofs.n_dofs
    info = _boundary_vertex_info(mesh)

    cols_rows: list[int] = []
    cols_cols: list[int] = []
    cols_vals: list[float] = []
    offset = np.zeros(n_full)
    next_col = 0

    def keep(dof):
        nonlocal next_col
        cols_rows.append(dof)
        cols_cols.append(next_col)
        cols_vals.append(1.0)
        next_col += 1

    def keep_direction(vertex, direction):
        nonlocal next_col
        for comp, val in enumerate(direction):
            cols_rows.append(3 * vertex + comp)
            cols_cols.append(next_col)
            cols_vals.append(float(val))
        next_col += 1

    def constrain_tangential(vertex, normal):
        tau = np.array([-normal[1], normal[0]])
        ubar = _dirichlet_value(case, mesh.vertices[vertex])
        keep_direction(vertex, normal)
        offset[3 * vertex : 3 * vertex + 2] = (tau @ ubar) * tau

    for v in range(mesh.n_vertices):
        if v not in info:
            keep(3 * v)
            keep(3 * v + 1)
            keep(3 * v + 2)
            continue
        e_in, e_out = info[v]
        n_a, n_b = mesh.edge_normal[e_in], mesh.edge_normal[e_out]
        turn = n_a[0] * n_b[1] - n_a[1] * n_b[0]  # sign of the CCW boundary turn
        colinear = abs(turn) < 1e-12 and n_a @ n_b > 0.0

        if colinear:
            constrain_tangential(v, n_a)
        elif mesh.edge_tag[e_in] == mesh.edge_tag[e_out]:
            # interior vertex of a polygonally approximated curved segment:
            # treat like a straight vertex with the averaged numerical normal
            constrain_tangential(v, (n_a + n_b) / np.linalg.norm(n_a + n_b))
        elif turn > 0.0:
            # convex corner: the tangents of both segments are prescribed,
            # so both components are fixed by the data
            offset[3 * v : 3 * v + 2] = _dirichlet_value(case, mesh.vertices[v])
        elif corner_strategy == "both-zero":
            offset[3 * v : 3 * v + 2] = _dirichlet_value(case, mesh.vertices[v])
        elif corner_strategy == "free":
            keep(3 * v)
            keep(3 * v + 1)
        else:  # bisector-normal
            constrain_tangential(v, (n_a + n_b) / np.linalg.norm(n_a + n_b))
        # p = 0 on the whole boundary: no column, zero offset

    transform = sp.coo_matrix(
        (cols_vals, (cols_rows, cols_cols)), shape=(n_full, next_col)
    ).tocsr()
    reduced = (transform.T @ system.matrix @ transform).tocsr()
    reduced = (reduced + reduced.T) * 0.5
    rhs = transform.T @ (system.rhs - system.matrix @ offset)
    return LinearSystem(
        reduced, rhs, dofs, system.formulation, transform=transform, offset=offset
    )


def write_matrix_market(system: LinearSystem, path: str) -> None:
    """Dump the (symmetric) system matrix in MatrixMarket coordinate format."""
    import scipy.io as sio

    sio.mmwrite(path, sp.tril(system.matrix), symmetry="symmetric")
