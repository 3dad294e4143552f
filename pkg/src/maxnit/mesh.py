"""Triangulations of the square, L-shaped and curved-L domains.

All meshes are stored as flat numpy arrays: vertex coordinates, CCW
triangle connectivity, and an explicit boundary-edge table carrying
outward normals, the adjacent element, the element diameter used as the
local boundary length scale, and a segment tag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "Mesh",
    "MeshError",
    "gen_square_uniform",
    "gen_square_crisscross",
    "gen_lshape",
    "gen_lshape_uniform",
    "powell_sabin_refine",
    "map_to_curved_l",
    "mesh_stats",
    "validate_mesh",
    "save_txt",
]

_DOMAIN_AREAS = {"square": 4.0, "lshape": 3.0}


class MeshError(RuntimeError):
    pass


@dataclass
class Mesh:
    """Immutable triangulation with precomputed geometry.

    Boundary edges are oriented so the interior lies to the left of the
    (v0, v1) direction; `edge_local_h` is the diameter of the adjacent
    triangle, the length scale entering boundary penalty weights.
    """

    vertices: np.ndarray        # (n, 2)
    triangles: np.ndarray       # (m, 3) CCW vertex ids
    domain: str
    tri_area: np.ndarray        # (m,)
    tri_h: np.ndarray           # (m,) diameters (longest edge)
    edge_vertices: np.ndarray   # (k, 2)
    edge_tri: np.ndarray        # (k,) adjacent triangle id
    edge_normal: np.ndarray     # (k, 2) outward unit normal
    edge_length: np.ndarray     # (k,)
    edge_local_h: np.ndarray    # (k,)
    edge_tag: list = field(default_factory=list)  # (k,) segment names
    on_boundary: np.ndarray = None  # (n,) bool

    @property
    def h(self) -> float:
        return float(self.tri_h.max())

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_boundary_edges(self) -> int:
        return self.edge_vertices.shape[0]


def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    return 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    )


def _diameters(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    e = np.stack(
        [p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1
    )
    return np.sqrt((e**2).sum(axis=2)).max(axis=1)


def _boundary_edges(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Directed boundary edges (as ordered in their CCW triangle) and owners."""
    m = triangles.shape[0]
    directed = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    owner = np.tile(np.arange(m), 3)
    key = np.sort(directed, axis=1)
    order = np.lexsort((key[:, 1], key[:, 0]))
    key_sorted = key[order]
    same_prev = np.zeros(len(order), dtype=bool)
    same_prev[1:] = np.all(key_sorted[1:] == key_sorted[:-1], axis=1)
    same_next = np.zeros(len(order), dtype=bool)
    same_next[:-1] = same_prev[1:]
    multiplicity = 1 + same_prev.astype(int) + same_next.astype(int)
    if multiplicity.max() > 2:
        raise MeshError("non-manifold edge: shared by more than two triangles")
    single = order[multiplicity == 1]
    return directed[single], owner[single]


def _build(vertices, triangles, domain, tag_of=None, edge_tags=None) -> Mesh:
    """Assemble the derived geometry; `tag_of` maps edge midpoints to names."""
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    areas = _signed_areas(vertices, triangles)
    if np.any(areas <= 0.0):
        raise MeshError("triangle with non-positive signed area")
    h_k = _diameters(vertices, triangles)

    bedges, owners = _boundary_edges(triangles)
    tangents = vertices[bedges[:, 1]] - vertices[bedges[:, 0]]
    lengths = np.sqrt((tangents**2).sum(axis=1))
    # interior is left of the directed edge, so the outward normal is its
    # clockwise rotation
    normals = np.column_stack([tangents[:, 1], -tangents[:, 0]]) / lengths[:, None]

    if edge_tags is not None:
        tags = [edge_tags[frozenset(pair)] for pair in bedges.tolist()]
    elif tag_of is not None:
        mids = 0.5 * (vertices[bedges[:, 0]] + vertices[bedges[:, 1]])
        tags = [tag_of(x, y) for x, y in mids]
    else:
        tags = ["boundary"] * len(bedges)

    on_bnd = np.zeros(len(vertices), dtype=bool)
    on_bnd[bedges.ravel()] = True

    return Mesh(
        vertices=vertices,
        triangles=triangles,
        domain=domain,
        tri_area=areas,
        tri_h=h_k,
        edge_vertices=bedges,
        edge_tri=owners,
        edge_normal=normals,
        edge_length=lengths,
        edge_local_h=h_k[owners],
        edge_tag=tags,
        on_boundary=on_bnd,
    )


def _square_tag(x: float, y: float, tol: float = 1e-12) -> str:
    if abs(x + 1.0) < tol:
        return "left"
    if abs(x - 1.0) < tol:
        return "right"
    if abs(y + 1.0) < tol:
        return "bottom"
    return "top"


def _lshape_tag(x: float, y: float, tol: float = 1e-12) -> str:
    if abs(x + 1.0) < tol:
        return "left"
    if abs(y - 1.0) < tol:
        return "top"
    if abs(x - 1.0) < tol:
        return "right"
    if abs(y + 1.0) < tol:
        return "bottom"
    if abs(y) < tol:
        return "leg-x"
    if abs(x) < tol:
        return "leg-y"
    raise MeshError(f"boundary edge midpoint ({x}, {y}) not on a known segment")


def gen_square_uniform(n_cells: int) -> Mesh:
    """n x n grid on (-1,1)^2, every cell split along the same diagonal."""
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    n = n_cells
    coords = np.linspace(-1.0, 1.0, n + 1)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    tris = []
    for i in range(n):
        for j in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v11, v01 = vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((v00, v10, v11))  # diagonal from v00 to v11
            tris.append((v00, v11, v01))
    return _build(vertices, np.array(tris), "square", tag_of=_square_tag)


def gen_square_crisscross(n_cells: int) -> Mesh:
    """n x n grid on (-1,1)^2, every cell split by both diagonals."""
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    n = n_cells
    coords = np.linspace(-1.0, 1.0, n + 1)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    grid = np.column_stack([xx.ravel(), yy.ravel()])
    centers = np.array(
        [
            (0.5 * (coords[i] + coords[i + 1]), 0.5 * (coords[j] + coords[j + 1]))
            for i in range(n)
            for j in range(n)
        ]
    )
    vertices = np.concatenate([grid, centers])

    def vid(i, j):
        return i * (n + 1) + j

    base = (n + 1) ** 2
    tris = []
    for i in range(n):
        for j in range(n):
            ctr = base + i * n + j
            v00, v10 = vid(i, j), vid(i + 1, j)
            v11, v01 = vid(i + 1, j + 1), vid(i, j + 1)
            tris += [(v00, v10, ctr), (v10, v11, ctr), (v11, v01, ctr), (v01, v00, ctr)]
    return _build(vertices, np.array(tris), "square", tag_of=_square_tag)


def _lshape_cells(n: int):
    """Grid cells of [-1,1]^2 kept for the L-domain (x>=0, y<=0 removed)."""
    if n < 2 or n % 2 != 0:
        raise ValueError("n_cells must be even and >= 2 for the L-shaped domain")
    half = n // 2
    return [(i, j) for i in range(n) for j in range(n) if not (i >= half and j < half)]


def _compact(vertices, tris):
    used = np.unique(np.asarray(tris).ravel())
    remap = np.full(len(vertices), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return vertices[used], remap[np.asarray(tris)]


def gen_lshape(n_cells: int) -> Mesh:
    """Criss-cross mesh of [-1,1]^2 minus [0,1]x[-1,0]; the origin is a vertex."""
    n = n_cells
    cells = _lshape_cells(n)
    coords = np.linspace(-1.0, 1.0, n + 1)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    grid = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    centers = np.array(
        [
            (0.5 * (coords[i] + coords[i + 1]), 0.5 * (coords[j] + coords[j + 1]))
            for i, j in cells
        ]
    )
    vertices = np.concatenate([grid, centers])
    base = (n + 1) ** 2
    tris = []
    for k, (i, j) in enumerate(cells):
        ctr = base + k
        v00, v10 = vid(i, j), vid(i + 1, j)
        v11, v01 = vid(i + 1, j + 1), vid(i, j + 1)
        tris += [(v00, v10, ctr), (v10, v11, ctr), (v11, v01, ctr), (v01, v00, ctr)]
    vertices, tris = _compact(vertices, tris)
    return _build(vertices, tris, "lshape", tag_of=_lshape_tag)


def gen_lshape_uniform(n_cells: int) -> Mesh:
    """Same-diagonal right-angled mesh of the L-domain (Powell-Sabin base)."""
    n = n_cells
    cells = _lshape_cells(n)
    coords = np.linspace(-1.0, 1.0, n + 1)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    tris = []
    for i, j in cells:
        v00, v10 = vid(i, j), vid(i + 1, j)
        v11, v01 = vid(i + 1, j + 1), vid(i, j + 1)
        tris += [(v00, v10, v11), (v00, v11, v01)]
    vertices, tris = _compact(vertices, tris)
    return _build(vertices, tris, "lshape", tag_of=_lshape_tag)


def _incenters(vertices, triangles):
    p = vertices[triangles]
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)  # opposite vertex 0
    b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    w = np.stack([a, b, c], axis=1)
    return (w[:, :, None] * p).sum(axis=1) / w.sum(axis=1)[:, None]


def powell_sabin_refine(m: Mesh) -> Mesh:
    """Six-way split: incenter interior point, incenter-line edge splits,
    boundary-edge midpoints."""
    verts = m.vertices
    tris = m.triangles
    n_v, n_t = len(verts), len(tris)
    centers = _incenters(verts, tris)

    # unique undirected edges with their one or two adjacent triangles
    directed = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    owner = np.tile(np.arange(n_t), 3)
    key = np.sort(directed, axis=1)
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    n_e = len(uniq)
    adj = np.full((n_e, 2), -1, dtype=np.int64)
    for row, e in enumerate(inverse):
        if adj[e, 0] < 0:
            adj[e, 0] = owner[row]
        else:
            adj[e, 1] = owner[row]

    splits = np.empty((n_e, 2))
    interior = adj[:, 1] >= 0
    p0 = verts[uniq[:, 0]]
    p1 = verts[uniq[:, 1]]
    splits[~interior] = 0.5 * (p0[~interior] + p1[~interior])
    if interior.any():
        z1 = centers[adj[interior, 0]]
        z2 = centers[adj[interior, 1]]
        e01 = p1[interior] - p0[interior]
        dz = z2 - z1
        denom = e01[:, 0] * dz[:, 1] - e01[:, 1] * dz[:, 0]
        num = (z1 - p0[interior])[:, 0] * dz[:, 1] - (z1 - p0[interior])[:, 1] * dz[:, 0]
        t = num / denom
        if np.any(t <= 1e-9) or np.any(t >= 1.0 - 1e-9):
            raise MeshError("incenter segment misses the open edge; mesh too distorted")
        splits[interior] = p0[interior] + t[:, None] * e01

    new_verts = np.concatenate([verts, centers, splits])
    center_id = n_v + np.arange(n_t)
    split_id = n_v + n_t + np.arange(n_e)

    # per-triangle local edges in CCW order: (0,1), (1,2), (2,0)
    edge_of_tri = inverse.reshape(3, n_t).T
    children = np.empty((6 * n_t, 3), dtype=np.int64)
    for loc, (la, lb) in enumerate(((0, 1), (1, 2), (2, 0))):
        a = tris[:, la]
        b = tris[:, lb]
        mid = split_id[edge_of_tri[:, loc]]
        z = center_id
        children[2 * loc::6] = np.column_stack([a, mid, z])
        children[2 * loc + 1::6] = np.column_stack([mid, b, z])

    # child boundary edges contain exactly one split vertex; inherit its tag
    parent_tag = {}
    old_tags = {frozenset(p): t for p, t in zip(m.edge_vertices.tolist(), m.edge_tag)}
    for e in range(n_e):
        if not interior[e]:
            pair = frozenset(uniq[e].tolist())
            parent_tag[int(split_id[e])] = old_tags[pair]

    def tag_of_edge(pair: frozenset) -> str:
        for v in pair:
            if v in parent_tag:
                return parent_tag[v]
        raise MeshError("refined boundary edge without a split vertex")

    refined = _build(new_verts, children, m.domain)
    tags = [tag_of_edge(frozenset(p)) for p in refined.edge_vertices.tolist()]
    refined.edge_tag = tags
    return refined


_ARC_CENTER = np.array([1.0, -1.0])
_ARC_RADIUS = 2.0


def _graph_laplacian_smooth(vertices, triangles, fixed):
    """Interior vertices moved to the converged Laplacian-smoothing positions:
    the solution of the uniform graph-Laplace equation with fixed boundary."""
    edges = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    n = len(vertices)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    lap = sp.diags(deg) - adj

    free = ~fixed
    if not free.any():
        return vertices.copy()
    a_ff = lap[free][:, free].tocsc()
    a_fb = lap[free][:, fixed]
    rhs = -a_fb @ vertices[fixed]
    lu = spla.splu(a_ff)
    out = vertices.copy()
    out[free, 0] = lu.solve(rhs[:, 0])
    out[free, 1] = lu.solve(rhs[:, 1])
    return out


def _blend_toward_arc(points: np.ndarray) -> np.ndarray:
    """Radial compression about the arc centre taking the corner path
    x=-1 / y=1 onto the arc while keeping the inner boundary fixed.

    Along the ray at angle phi from the centre, positions between the
    re-entrant legs (distance a) and the corner path (distance R) are mapped
    linearly onto [a, 2]; everything closer than the legs stays put. The rays
    through the fixed outer segments x=1 and y=-1 have R = 2, so the map is
    the identity there and the whole boundary behaves as required.
    """
    rel = points - _ARC_CENTER
    dist = np.linalg.norm(rel, axis=1)
    phi = np.arctan2(rel[:, 1], rel[:, 0])
    span = np.maximum(np.sin(phi), np.abs(np.cos(phi)))
    # freeze the disc reaching the re-entrant corner so the singular
    # neighbourhood is untouched; sqrt(2) = |corner - centre|
    inner = np.maximum(1.0 / span, np.sqrt(2.0))
    far = 2.0 / span
    scale = np.ones_like(dist)
    move = dist > inner
    scale[move] = (
        inner[move] + (dist[move] - inner[move]) * (2.0 - inner[move]) / (far[move] - inner[move])
    ) / dist[move]
    return _ARC_CENTER + rel * scale[:, None]


def map_to_curved_l(m: Mesh, max_sweeps: int = 200) -> Mesh:
    """Project the x=-1 and y=1 boundary onto the radius-2 arc centred at
    (1,-1); interior vertices follow a compatible radial blend, with
    safeguarded Laplacian relaxation as a fallback if any triangle folds."""
    if m.domain != "lshape":
        raise MeshError("map_to_curved_l expects an L-shape mesh")
    verts = _blend_toward_arc(m.vertices)

    project = np.zeros(len(verts), dtype=bool)
    for pair, tag in zip(m.edge_vertices, m.edge_tag):
        if tag in ("left", "top"):
            project[pair] = True
    radial = m.vertices[project] - _ARC_CENTER
    dist = np.linalg.norm(radial, axis=1)
    verts[project] = _ARC_CENTER + radial * (_ARC_RADIUS / dist)[:, None]

    # safeguarded Laplacian sweeps; a no-op when the blend already yields
    # positive areas everywhere
    sweep = 0
    while np.any(_signed_areas(verts, m.triangles) <= 0.0):
        if sweep >= max_sweeps:
            raise MeshError("smoothing failed to restore positive areas")
        sweep += 1
        bad = np.unique(m.triangles[_signed_areas(verts, m.triangles) <= 0.0])
        for v in bad:
            if m.on_boundary[v]:
                continue
            nbrs = np.unique(m.triangles[np.any(m.triangles == v, axis=1)])
            nbrs = nbrs[nbrs != v]
            verts[v] = 0.5 * verts[v] + 0.5 * verts[nbrs].mean(axis=0)

    tags = {
        frozenset(p): ("arc" if t in ("left", "top") else t)
        for p, t in zip(m.edge_vertices.tolist(), m.edge_tag)
    }
    return _build(verts, m.triangles, "curved-l", edge_tags=tags)


def mesh_stats(m: Mesh) -> dict:
    """Basic size and quality report; min_angle is in degrees."""
    p = m.vertices[m.triangles]
    angles = []
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        v = p[:, (i + 2) % 3] - p[:, i]
        cosang = (u * v).sum(axis=1) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
        )
        angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
    return {
        "h": m.h,
        "n_vertices": m.n_vertices,
        "n_triangles": m.n_triangles,
        "n_boundary_edges": m.n_boundary_edges,
        "min_area": float(m.tri_area.min()),
        "min_angle": float(np.min(angles)),
    }


def validate_mesh(m: Mesh, area_tol: float = 1e-10) -> None:
    """Raise MeshError on any violated structural invariant."""
    if not np.all(np.isfinite(m.vertices)):
        raise MeshError("non-finite vertex coordinates")
    if np.any(_signed_areas(m.vertices, m.triangles) <= 0.0):
        raise MeshError("non-CCW triangle")

    bedges, owners = _boundary_edges(m.triangles)
    found = {frozenset(p) for p in bedges.tolist()}
    stored = {frozenset(p) for p in m.edge_vertices.tolist()}
    if found != stored:
        raise MeshError("stored boundary edges disagree with connectivity")

    mids = 0.5 * (m.vertices[m.edge_vertices[:, 0]] + m.vertices[m.edge_vertices[:, 1]])
    centroids = m.vertices[m.triangles[m.edge_tri]].mean(axis=1)
    if np.any(((mids - centroids) * m.edge_normal).sum(axis=1) <= 0.0):
        raise MeshError("boundary normal points inward")
    if not np.allclose(np.linalg.norm(m.edge_normal, axis=1), 1.0, atol=1e-12):
        raise MeshError("boundary normal not unit length")

    expected = _DOMAIN_AREAS.get(m.domain)
    if expected is not None:
        total = m.tri_area.sum()
        if abs(total - expected) > area_tol * expected:
            raise MeshError(f"area {total} differs from domain area {expected}")

    if not np.array_equal(_diameters(m.vertices, m.triangles), m.tri_h):
        raise MeshError("stored diameters are stale")


def save_txt(m: Mesh, path: str) -> None:
    """Plain-text export: one header line, then one line per entity."""
    with open(path, "w") as f:
        f.write(
            f"VERTICES {m.n_vertices} / TRIANGLES {m.n_triangles} / "
            f"BEDGES {m.n_boundary_edges}\n"
        )
        for i, (x, y) in enumerate(m.vertices):
            f.write(f"{i} {x:.17g} {y:.17g}\n")
        for i, (a, b, c) in enumerate(m.triangles):
            f.write(f"{i} {a} {b} {c}\n")
        for i in range(m.n_boundary_edges):
            a, b = m.edge_vertices[i]
            nx, ny = m.edge_normal[i]
            f.write(
                f"{i} {a} {b} {m.edge_tri[i]} {nx:.17g} {ny:.17g} {m.edge_tag[i]}\n"
            )
