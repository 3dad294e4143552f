import numpy as np
import pytest

from maxnit.assembly import (
    DegenerateTriangleError,
    DofMap,
    Params,
    apply_strong_bc,
    assemble_global,
    assemble_rhs,
    edge_nitsche_blocks,
    local_curl_curl,
    local_div_div,
    local_mixed_grad,
    local_pressure_laplacian,
)
from maxnit.linsolve import solve
from maxnit.mesh import (
    gen_lshape,
    gen_square_crisscross,
    gen_square_uniform,
    map_to_curved_l,
    powell_sabin_refine,
)
from maxnit.problems import ProblemCase, _vectorised, lshape_case, square_case

from conftest import (
    oracle_curl_curl,
    oracle_div_div,
    oracle_edge_blocks,
    oracle_mixed_grad,
    oracle_pressure_laplacian,
    random_ccw_triangle,
)

REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def rotation_patch_case(domain="square"):
    """u = (-y, x), p = 0: constant curl 2, zero divergence, zero source."""

    @_vectorised
    def u(pts):
        return np.column_stack([-pts[:, 1], pts[:, 0]])

    @_vectorised
    def curl(pts):
        return np.full(pts.shape[0], 2.0)

    @_vectorised
    def f(pts):
        return np.zeros((pts.shape[0], 2))

    return ProblemCase(domain, 1.0, u, curl, f, u)


def zero_case(domain="square"):
    @_vectorised
    def zv(pts):
        return np.zeros((pts.shape[0], 2))

    @_vectorised
    def zs(pts):
        return np.zeros(pts.shape[0])

    return ProblemCase(domain, 1.0, zv, zs, zv, zv)


class TestLocalMatrices:
    def test_curl_curl_reference_entries(self):
        block = local_curl_curl(REF, 1.0)
        # curl(lambda_0, 0) = -d2 lambda_0 = 1, curl(0, lambda_0) = d1 lambda_0 = -1
        assert block[0, 0] == pytest.approx(0.5)
        assert block[0, 1] == pytest.approx(-0.5)

    def test_curl_curl_nullspace(self):
        block = local_curl_curl(REF, 2.5)
        constant = np.array([1.0, 0.0, 1.0, 0.0, 1.0, 0.0])
        assert np.allclose(block @ constant, 0.0, atol=1e-14)
        # the nodal interpolant of grad(lambda_1) is again a constant field
        gradient = np.array([1.0, 0.0, 1.0, 0.0, 1.0, 0.0])
        assert abs(gradient @ block @ gradient) < 1e-14

    def test_mixed_grad_reference_entry(self):
        block = local_mixed_grad(REF)
        # int lambda_0 * d1 lambda_1 = (1/3 area) * 1 = 1/6
        assert block[0, 1] == pytest.approx(1.0 / 6.0)

    def test_mixed_grad_constant_pressure(self):
        block = local_mixed_grad(REF)
        assert np.allclose(block @ np.ones(3), 0.0, atol=1e-15)

    def test_div_div_rigid_rotation(self):
        params = Params(nu=1.0, L0=1.0, c_u=1.0)
        block = local_div_div(REF, params)
        rot = np.array([0.0, 0.0, 0.0, 1.0, -1.0, 0.0])  # nodal (-y, x)
        assert abs(rot @ block @ rot) < 1e-14

    def test_div_div_reference_entry_and_scaling(self):
        params = Params(nu=1.0, L0=1.0, c_u=1.0)
        block = local_div_div(REF, params)
        # h_K = sqrt(2): entry for (lambda_1, 0): 2 * area * (d1 lambda_1)^2
        assert block[2, 2] == pytest.approx(1.0)
        wide = local_div_div(REF, Params(nu=1.0, L0=2.0, c_u=1.0))
        assert np.allclose(wide, block / 4.0)

    def test_pressure_laplacian(self):
        params = Params(nu=1.0, L0=1.0, c_u=1.0)
        block = local_pressure_laplacian(REF, params)
        assert np.allclose(block @ np.ones(3), 0.0, atol=1e-15)
        assert block[1, 1] == pytest.approx(-0.5)
        assert np.all(np.linalg.eigvalsh(block) < 1e-14)

    def test_degenerate_triangle_rejected(self):
        flat = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 1e-16]])
        with pytest.raises(DegenerateTriangleError):
            local_curl_curl(flat, 1.0)


class TestLocalOracle:
    """Brute-force quadrature on independently reconstructed basis functions."""

    def test_volume_blocks_match_oracle(self, rng):
        params = Params(nu=1.3, L0=0.7, c_u=0.4)
        for _ in range(100):
            tri = random_ccw_triangle(rng)
            for produced, expected in [
                (local_curl_curl(tri, params.nu), oracle_curl_curl(tri, params.nu)),
                (local_mixed_grad(tri), oracle_mixed_grad(tri)),
                (local_div_div(tri, params), oracle_div_div(tri, params)),
                (
                    local_pressure_laplacian(tri, params),
                    oracle_pressure_laplacian(tri, params),
                ),
            ]:
                scale = max(1.0, np.abs(expected).max())
                assert np.abs(produced - expected).max() < 1e-12 * scale

    def test_edge_blocks_match_oracle(self, rng):
        from maxnit.mesh import _build

        params = Params(nu=0.8, L0=1.7, c_u=1.0, N_u=35.0, N_p=12.0)
        for _ in range(100):
            tri = random_ccw_triangle(rng)
            mesh = _build(tri, np.array([[0, 1, 2]]), "test")
            e = int(rng.integers(0, 3))
            v0, v1 = mesh.edge_vertices[e]
            local = (
                int(np.where(mesh.triangles[0] == v0)[0][0]),
                int(np.where(mesh.triangles[0] == v1)[0][0]),
            )
            expected = oracle_edge_blocks(tri, local, mesh.edge_normal[e], params)
            blocks = edge_nitsche_blocks(mesh, e, params)
            dofs = DofMap(3)
            keyed = {
                (tuple(r), tuple(c)): b for r, c, b in blocks
            }
            edge_u = tuple(dofs.u_pair([v0, v1]))
            edge_p = tuple(dofs.p(np.array([v0, v1])))
            tri_u = tuple(dofs.u_pair(mesh.triangles[0]))
            tri_p = tuple(dofs.p(mesh.triangles[0]))
            pairs = [
                ((edge_u, tri_u), expected["consistency"]),
                ((edge_p, edge_u), expected["normal_flux"]),
                ((edge_u, edge_u), expected["penalty_u"]),
                ((edge_p, edge_p), expected["penalty_p"]),
                ((edge_p, tri_p), expected["p_flux"]),
            ]
            for key, exp in pairs:
                got = keyed[key]
                scale = max(1.0, np.abs(exp).max())
                assert np.abs(got - exp).max() < 1e-12 * scale
            # symmetric counterparts are exact transposes
            assert np.array_equal(keyed[(tri_u, edge_u)], keyed[(edge_u, tri_u)].T)
            assert np.array_equal(keyed[(edge_u, edge_p)], keyed[(edge_p, edge_u)].T)
            assert np.array_equal(keyed[(tri_p, edge_p)], keyed[(edge_p, tri_p)].T)


class TestEdgeBlocks:
    def test_penalty_block_bottom_edge(self):
        mesh = gen_square_uniform(1)
        bottoms = [e for e in range(4) if np.allclose(mesh.edge_normal[e], [0, -1])]
        assert len(bottoms) == 1
        e = bottoms[0]
        params = Params(nu=1.0, L0=1.0, c_u=1.0, N_u=100.0, N_p=100.0)
        blocks = edge_nitsche_blocks(mesh, e, params)
        dofs = DofMap(mesh.n_vertices)
        v0, v1 = mesh.edge_vertices[e]
        edge_u = tuple(dofs.u_pair([v0, v1]))
        pen = next(b for r, c, b in blocks if tuple(r) == edge_u and tuple(c) == edge_u)
        # n = (0,-1): t(v) = v_x, so only the x-x pairs carry the edge mass
        ell = mesh.edge_length[e]
        lh = mesh.edge_local_h[e]
        mass = 100.0 / lh * ell / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
        assert np.allclose(pen[np.ix_([0, 2], [0, 2])], mass, rtol=1e-14)
        assert np.allclose(pen[np.ix_([1, 3], [1, 3])], 0.0, atol=1e-14)

    def test_pressure_penalty_is_negative(self):
        mesh = gen_square_uniform(2)
        params = Params(N_u=100.0, N_p=100.0)
        case = zero_case()
        system = assemble_global(mesh, params, case)
        dofs = system.dofmap
        diag = system.matrix.diagonal()
        boundary = np.where(mesh.on_boundary)[0]
        interior = np.where(~mesh.on_boundary)[0]
        # boundary p diagonals pick up the negative penalty mass on top of
        # the (already negative) pressure laplacian
        assert np.all(diag[dofs.p(boundary)] < diag[dofs.p(interior)].max())
        assert np.all(diag[dofs.p(boundary)] < 0)

    def test_strong_formulation_has_no_edge_blocks(self):
        mesh = gen_square_uniform(1)
        params = Params(formulation="stabilised-strong")
        assert edge_nitsche_blocks(mesh, 0, params) == []


class TestRhs:
    def test_zero_data_gives_zero_vector(self):
        mesh = gen_square_uniform(2)
        b = assemble_rhs(mesh, zero_case(), Params())
        assert np.all(b == 0.0)

    def test_corner_singularity_cases_have_boundary_only_rhs(self):
        mesh = gen_lshape(4)
        case = lshape_case(2)
        strong = assemble_rhs(mesh, case, Params(formulation="stabilised-strong"))
        assert np.all(strong == 0.0)  # zero source: the volume term vanishes
        weak = assemble_rhs(mesh, case, Params())
        assert np.abs(weak).max() > 0.0

    def test_rhs_matches_refined_quadrature_oracle(self):
        # independent degree-8 rule with two extra subdivisions
        from maxnit.quadrature import edge_rule, subdivide_triangle_rule, triangle_rule

        mesh = gen_square_uniform(8)
        case = square_case(1.0)
        params = Params(nu=1.0, L0=0.1, c_u=0.1, N_u=100.0, N_p=100.0)
        b = assemble_rhs(mesh, case, params)

        dofs = DofMap(mesh.n_vertices)
        oracle = np.zeros(dofs.n_dofs)
        rule = subdivide_triangle_rule(triangle_rule(8), 2)
        coords = mesh.vertices[mesh.triangles]
        pts = np.einsum("qk,mkd->mqd", rule.points, coords)
        f = case.source_f(pts.reshape(-1, 2)).reshape(pts.shape)
        contrib = 2.0 * mesh.tri_area[:, None, None] * np.einsum(
            "q,qi,mqd->mid", rule.weights, rule.points, f
        )
        for i in range(3):
            np.add.at(oracle, dofs.ux(mesh.triangles[:, i]), contrib[:, i, 0])
            np.add.at(oracle, dofs.uy(mesh.triangles[:, i]), contrib[:, i, 1])

        erule = edge_rule(21)
        t, ew = erule.points, erule.weights
        from maxnit.assembly import _curl_coefs, _tri_geometry

        p0 = mesh.vertices[mesh.edge_vertices[:, 0]]
        p1 = mesh.vertices[mesh.edge_vertices[:, 1]]
        epts = p0[:, None, :] + t[None, :, None] * (p1 - p0)[:, None, :]
        ubar = case.dirichlet_u(epts.reshape(-1, 2)).reshape(epts.shape)
        tu = (
            mesh.edge_normal[:, None, 0] * ubar[:, :, 1]
            - mesh.edge_normal[:, None, 1] * ubar[:, :, 0]
        )
        _, _, grads = _tri_geometry(mesh.vertices[mesh.triangles[mesh.edge_tri]])
        curl6 = _curl_coefs(grads)
        mom0 = mesh.edge_length * (tu @ ew)
        tri_u = dofs.u_pair(mesh.triangles[mesh.edge_tri].ravel()).reshape(-1, 6)
        np.add.at(oracle, tri_u.ravel(), (-params.nu * mom0[:, None] * curl6).ravel())
        lam = np.column_stack([1.0 - t, t])
        mom1 = mesh.edge_length[:, None] * np.einsum("q,qi,kq->ki", ew, lam, tu)
        scale = params.N_u * params.nu / mesh.edge_local_h
        tvecs = np.column_stack([-mesh.edge_normal[:, 1], mesh.edge_normal[:, 0]])
        pen = scale[:, None, None] * mom1[:, :, None] * tvecs[:, None, :]
        edge_u = dofs.u_pair(mesh.edge_vertices.ravel()).reshape(-1, 4)
        np.add.at(oracle, edge_u.ravel(), pen.reshape(-1, 4).ravel())

        assert np.linalg.norm(b - oracle) < 1e-10 * np.linalg.norm(oracle)

    def test_domain_mismatch_rejected(self):
        with pytest.raises(ValueError):
            assemble_rhs(gen_square_uniform(2), lshape_case(1), Params())


class TestGlobalAssembly:
    def test_exact_symmetry(self):
        mesh = gen_square_crisscross(3)
        system = assemble_global(mesh, Params(), square_case())
        diff = (system.matrix - system.matrix.T).tocoo()
        assert diff.nnz == 0 or np.abs(diff.data).max() == 0.0

    def test_dof_count(self):
        system = assemble_global(gen_square_uniform(2), Params(), square_case())
        assert system.matrix.shape == (27, 27)
        assert system.dofmap.n_dofs == 27

    def test_quadratic_form_positivity(self, rng):
        mesh = gen_square_uniform(4)
        system = assemble_global(
            mesh, Params(nu=1.0, L0=2.0, c_u=1.0, N_u=100.0, N_p=100.0), square_case()
        )
        n = mesh.n_vertices
        flip = np.ones(3 * n)
        flip[2::3] = -1.0
        for _ in range(20):
            x = rng.standard_normal(3 * n)
            assert x @ (system.matrix @ (flip * x)) > 0.0

    def test_formulation_nesting(self):
        from maxnit.assembly import (
            _batch_div_div,
            _batch_pressure_laplacian,
            _tri_geometry,
        )
        import scipy.sparse as sp

        mesh = gen_square_crisscross(2)
        params_sn = Params(nu=1.0, L0=0.5, c_u=0.7, N_u=50.0, N_p=50.0)
        params_gn = Params(
            nu=1.0, L0=0.5, c_u=0.7, N_u=50.0, N_p=50.0, formulation="galerkin-nitsche"
        )
        case = square_case()
        a_sn = assemble_global(mesh, params_sn, case).matrix
        a_gn = assemble_global(mesh, params_gn, case).matrix

        dofs = DofMap(mesh.n_vertices)
        area, h_k, grads = _tri_geometry(mesh.vertices[mesh.triangles])
        uu = _batch_div_div(area, h_k, grads, params_sn)
        pp = _batch_pressure_laplacian(area, grads, params_sn)
        u_idx = dofs.u_pair(mesh.triangles.ravel()).reshape(-1, 6)
        p_idx = dofs.p(mesh.triangles)
        rows = np.concatenate(
            [np.repeat(u_idx, 6, axis=1).ravel(), np.repeat(p_idx, 3, axis=1).ravel()]
        )
        cols = np.concatenate(
            [np.tile(u_idx, (1, 6)).ravel(), np.tile(p_idx, (1, 3)).ravel()]
        )
        vals = np.concatenate([uu.ravel(), pp.ravel()])
        stab = sp.coo_matrix((vals, (rows, cols)), shape=a_sn.shape).tocsr()

        pflux_triplets = []
        for e in range(mesh.n_boundary_edges):
            for r, c, b in edge_nitsche_blocks(mesh, e, params_sn):
                keyset = (len(r), len(c))
                if keyset in ((2, 3), (3, 2)):
                    pflux_triplets.append((np.repeat(r, len(c)), np.tile(c, len(r)), b.ravel()))
        pflux = sp.coo_matrix(
            (
                np.concatenate([t[2] for t in pflux_triplets]),
                (
                    np.concatenate([t[0] for t in pflux_triplets]),
                    np.concatenate([t[1] for t in pflux_triplets]),
                ),
            ),
            shape=a_sn.shape,
        ).tocsr()

        residual = a_sn - (a_gn + stab + pflux)
        scale = max(1.0, abs(a_sn).max())
        assert abs(residual).max() < 1e-14 * scale


class TestPatchTest:
    @pytest.mark.parametrize(
        "mesh",
        [
            gen_square_uniform(3),
            gen_square_crisscross(3),
            powell_sabin_refine(gen_square_uniform(2)),
        ],
        ids=["uniform", "crisscross", "powell-sabin"],
    )
    def test_rotation_field_reproduced(self, mesh):
        case = rotation_patch_case()
        params = Params(nu=1.0, L0=0.5, c_u=0.5, N_u=100.0, N_p=100.0)
        sol = solve(assemble_global(mesh, params, case))
        expected = case.exact_u(mesh.vertices)
        assert np.abs(sol.u - expected).max() < 1e-10
        assert np.abs(sol.p).max() < 1e-10


class TestStrongBc:
    def test_square_corner_pairs_prescribed(self):
        mesh = gen_square_uniform(2)
        case = square_case()
        params = Params(formulation="stabilised-strong")
        system = apply_strong_bc(assemble_global(mesh, params, case), mesh, case, "both-zero")
        # eliminated: 3 dofs per boundary vertex at 4 corners, p plus the
        # tangential component elsewhere on the boundary
        n_boundary = int(mesh.on_boundary.sum())
        n_corners = 4
        eliminated = 3 * n_corners + 2 * (n_boundary - n_corners)
        assert system.n_unknowns == 3 * mesh.n_vertices - eliminated
        diff = (system.matrix - system.matrix.T).tocoo()
        assert diff.nnz == 0 or np.abs(diff.data).max() == 0.0

        sol = solve(system)
        ubar = case.dirichlet_u(mesh.vertices)
        for v in np.where(mesh.on_boundary)[0]:
            assert sol.p_at(v) == 0.0
        for corner in [(0, 0), (2, 0), (0, 2), (2, 2)]:
            v = int(np.where(
                np.all(np.abs(mesh.vertices - np.array([-1.0, -1.0]) - np.array(corner)) < 1e-12, axis=1)
            )[0][0])
            assert np.allclose(sol.u_at(v), ubar[v], atol=1e-12)

    def test_tangential_constraint_exact(self):
        mesh = gen_square_uniform(4)
        case = square_case()
        params = Params(formulation="stabilised-strong")
        system = apply_strong_bc(assemble_global(mesh, params, case), mesh, case, "both-zero")
        sol = solve(system)
        ubar = case.dirichlet_u(mesh.vertices)
        for e in range(mesh.n_boundary_edges):
            n = mesh.edge_normal[e]
            for v in mesh.edge_vertices[e]:
                t_sol = n[0] * sol.u_at(v)[1] - n[1] * sol.u_at(v)[0]
                t_bar = n[0] * ubar[v, 1] - n[1] * ubar[v, 0]
                assert t_sol == pytest.approx(t_bar, abs=1e-11)

    def test_strategies_differ_only_at_reentrant_corner(self):
        mesh = gen_lshape(8)
        case = lshape_case(1)
        params = Params(formulation="stabilised-strong")
        base = assemble_global(mesh, params, case)
        free = apply_strong_bc(base, mesh, case, "free")
        both = apply_strong_bc(base, mesh, case, "both-zero")
        bis = apply_strong_bc(base, mesh, case, "bisector-normal")
        # counted against both-zero: free keeps two extra unknowns, the
        # bisector rotation keeps one
        assert free.n_unknowns == both.n_unknowns + 2
        assert bis.n_unknowns == both.n_unknowns + 1

    def test_curved_arc_uses_averaged_normals(self):
        mesh = map_to_curved_l(gen_lshape(4))
        case = lshape_case(2)
        case = ProblemCase(
            "curved-l", 1.0, case.exact_u, case.exact_curl_u, case.source_f,
            case.dirichlet_u, 2,
        )
        params = Params(formulation="stabilised-strong")
        system = apply_strong_bc(assemble_global(mesh, params, case), mesh, case, "both-zero")
        sol = solve(system)
        assert np.isfinite(sol.coeffs).all()

    def test_unknown_strategy_rejected(self):
        mesh = gen_square_uniform(2)
        case = square_case()
        system = assemble_global(mesh, Params(formulation="stabilised-strong"), case)
        with pytest.raises(ValueError):
            apply_strong_bc(system, mesh, case, "mystery")


class TestParams:
    def test_positive_scalars_enforced(self):
        for bad in (dict(nu=0.0), dict(L0=-1.0), dict(c_u=0.0), dict(N_u=-1.0)):
            with pytest.raises(ValueError):
                Params(**bad)

    def test_unknown_selectors_rejected(self):
        with pytest.raises(ValueError):
            Params(formulation="collocation")
        with pytest.raises(ValueError):
            Params(corner_strategy="average")

    def test_small_penalty_warns(self):
        with pytest.warns(UserWarning):
            Params(N_u=0.5, N_p=0.5)


def test_matrix_market_dump(tmp_path):
    import scipy.io as sio

    mesh = gen_square_uniform(2)
    system = assemble_global(mesh, Params(), square_case())
    path = tmp_path / "system.mtx"
    from maxnit.assembly import write_matrix_market

    write_matrix_market(system, str(path))
    loaded = sio.mmread(str(path)).tocsr()
    assert loaded.shape == system.matrix.shape
    assert abs(loaded - system.matrix).max() < 1e-15


def test_velocity_block_positive_definite(rng):
    # curl-curl + div-div + penalty - consistency terms, probed on random
    # velocity-only vectors
    for mesh in (gen_square_uniform(4), gen_square_crisscross(4), gen_lshape(4)):
        case = zero_case(mesh.domain)
        system = assemble_global(
            mesh, Params(nu=1.0, L0=0.5, c_u=1.0, N_u=100.0, N_p=100.0), case
        )
        n = mesh.n_vertices
        u_dofs = np.ones(3 * n, dtype=bool)
        u_dofs[2::3] = False
        a_uu = system.matrix.toarray()[np.ix_(u_dofs, u_dofs)]
        for _ in range(20):
            x = rng.standard_normal(2 * n)
            assert x @ a_uu @ x > 0.0
