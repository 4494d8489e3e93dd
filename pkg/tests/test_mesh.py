"""Mesh loaders, primitive builders, and monomial volume integrals."""

import numpy as np
import pytest

from srsim.geometry import (
    SurfaceMesh,
    TetMesh,
    box_surface,
    box_tet,
    cloth_grid,
    cone_surface,
    fibonacci_sphere,
    load_obj,
    load_tetgen,
    save_obj,
    unique_edges,
    volume_integrals,
)


def _tet_volumes(verts, tets):
    d = verts[tets[:, 1:]] - verts[tets[:, :1]]
    return np.linalg.det(d) / 6.0


class TestUniqueEdges:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        tris = rng.integers(0, 30, size=(40, 3)).astype(np.int32)
        tris = tris[(tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])]
        edges = unique_edges(tris)
        expect = set()
        for a, b, c in tris:
            for i, j in ((a, b), (b, c), (c, a)):
                expect.add((min(i, j), max(i, j)))
        got = {tuple(e) for e in edges}
        assert got == expect
        # sorted rows, lexicographic order
        assert (edges[:, 0] <= edges[:, 1]).all()
        assert (np.lexsort((edges[:, 1], edges[:, 0])) == np.arange(len(edges))).all()


class TestBoxSurface:
    def test_shape_and_orientation(self):
        m = box_surface((1.0, 2.0, 3.0))
        assert m.vertices.shape == (8, 3)
        assert m.triangles.shape == (12, 3)
        # outward orientation: signed volume of the triangle fan equals the box volume
        v = m.vertices
        t = m.triangles
        vol = np.sum(np.einsum("ij,ij->i", v[t[:, 0]], np.cross(v[t[:, 1]], v[t[:, 2]]))) / 6.0
        assert vol == pytest.approx(6.0, rel=1e-12)
        assert m.is_watertight()


class TestBoxTet:
    def test_positive_volumes_and_watertight_surface(self):
        m = box_tet((1.0, 1.0, 1.0), divisions=3)
        vols = _tet_volumes(m.vertices, m.tets)
        assert (vols > 0).all()
        assert vols.sum() == pytest.approx(1.0, rel=1e-12)
        assert m.surface.is_watertight()

    def test_resolution_scaling(self):
        m = box_tet((2.0, 1.0, 1.0), divisions=2)
        vols = _tet_volumes(m.vertices, m.tets)
        assert vols.sum() == pytest.approx(2.0, rel=1e-12)


class TestVolumeIntegrals:
    def test_unit_cube_moments(self):
        # unit cube centered at origin, rho = 1000: mass 1000 kg,
        # second-moment diagonal 1000/12 (integral of x^2 over the cube = 1/12)
        m = box_surface((1.0, 1.0, 1.0))
        vol, first, second = volume_integrals(m.vertices, m.triangles)
        rho = 1000.0
        assert rho * vol == pytest.approx(1000.0, rel=1e-12)
        assert np.allclose(rho * first, 0.0, atol=1e-9)
        assert np.allclose(rho * np.diag(second), 1000.0 / 12.0, rtol=1e-12)
        off = second - np.diag(np.diag(second))
        assert np.allclose(off, 0.0, atol=1e-12)

    def test_translation_consistency(self):
        # integrals of a translated mesh match the shifted-monomial identities
        rng = np.random.default_rng(1)
        m = fibonacci_sphere(120, radius=0.7)
        t = rng.normal(size=3)
        v0, f0, s0 = volume_integrals(m.vertices, m.triangles)
        v1, f1, s1 = volume_integrals(m.vertices + t, m.triangles)
        assert v1 == pytest.approx(v0, rel=1e-12)
        assert np.allclose(f1, f0 + v0 * t, rtol=1e-10, atol=1e-12)
        expect = s0 + np.outer(f0, t) + np.outer(t, f0) + v0 * np.outer(t, t)
        assert np.allclose(s1, expect, rtol=1e-10, atol=1e-12)

    def test_canonical_tet(self):
        # single tetrahedron (0, e1, e2, e3): volume 1/6, int x = 1/24,
        # int x^2 = 1/60, int xy = 1/120
        verts = np.array(
            [[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0], [0.0, 0, 1]]
        )
        tris = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]], dtype=np.int32)
        vol, first, second = volume_integrals(verts, tris)
        assert vol == pytest.approx(1.0 / 6.0, rel=1e-14)
        assert np.allclose(first, 1.0 / 24.0, rtol=1e-13)
        assert np.allclose(np.diag(second), 1.0 / 60.0, rtol=1e-13)
        off = second[~np.eye(3, dtype=bool)]
        assert np.allclose(off, 1.0 / 120.0, rtol=1e-13)


class TestSphereAndCone:
    def test_fibonacci_sphere_exact_counts(self):
        for n in (680, 2000):
            m = fibonacci_sphere(n, radius=0.05)
            assert len(m.vertices) == n
            assert m.is_watertight()
            vol, _, _ = volume_integrals(m.vertices, m.triangles)
            # hull volume is positive and below the circumscribed ball
            assert 0 < vol < 4.0 / 3.0 * np.pi * 0.05**3 * 1.001

    def test_large_sphere_count(self):
        m = fibonacci_sphere(19049, radius=1.0)
        assert len(m.vertices) == 19049
        vol, _, _ = volume_integrals(m.vertices, m.triangles)
        assert vol == pytest.approx(4.0 / 3.0 * np.pi, rel=5e-3)

    def test_cone(self):
        m = cone_surface(radius=0.3, height=0.6, segments=64)
        assert m.is_watertight()
        vol, first, _ = volume_integrals(m.vertices, m.triangles)
        exact = np.pi * 0.3**2 * 0.6 / 3.0
        assert vol == pytest.approx(exact, rel=5e-3)
        # centroid of a cone sits at h/4 above the base
        assert first[1] / vol == pytest.approx(0.15, rel=5e-3)


class TestClothGrid:
    def test_counts_and_uv(self):
        m = cloth_grid(nx=5, nz=7, spacing=0.1)
        assert m.vertices.shape == (35, 3)
        assert m.triangles.shape == (2 * 4 * 6, 3)
        assert m.uv is not None
        # uv are rest-plane coordinates: 3D edge lengths match uv edge lengths
        e = m.edges
        d3 = np.linalg.norm(m.vertices[e[:, 0]] - m.vertices[e[:, 1]], axis=1)
        d2 = np.linalg.norm(m.uv[e[:, 0]] - m.uv[e[:, 1]], axis=1)
        assert np.allclose(d3, d2, rtol=1e-12)


class TestObjIO:
    def test_round_trip(self, tmp_path):
        m = fibonacci_sphere(200, radius=0.123)
        path = tmp_path / "s.obj"
        save_obj(str(path), m.vertices, m.triangles)
        m2 = load_obj(str(path))
        assert np.allclose(m2.vertices, m.vertices, rtol=1e-8, atol=1e-12)
        assert (m2.triangles == m.triangles).all()

    def test_quad_triangulation(self, tmp_path):
        path = tmp_path / "q.obj"
        path.write_text(
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"
        )
        m = load_obj(str(path))
        assert m.triangles.shape == (2, 3)
        assert (m.triangles == np.array([[0, 1, 2], [0, 2, 3]])).all()

    def test_negative_indices(self, tmp_path):
        path = tmp_path / "n.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
        m = load_obj(str(path))
        assert (m.triangles == np.array([[0, 1, 2]])).all()

    def test_missing_file(self):
        with pytest.raises(OSError):
            load_obj("/nonexistent/path/mesh.obj")


class TestTetgenIO:
    def test_load_node_ele(self, tmp_path):
        (tmp_path / "t.node").write_text(
            "4 3 0 0\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n"
        )
        (tmp_path / "t.ele").write_text("1 4 0\n1 1 2 3 4\n")
        m = load_tetgen(str(tmp_path / "t.node"), str(tmp_path / "t.ele"))
        assert m.vertices.shape == (4, 3)
        assert m.tets.shape == (1, 4)
        assert (_tet_volumes(m.vertices, m.tets) > 0).all()

    def test_zero_based_indices(self, tmp_path):
        (tmp_path / "t.node").write_text(
            "4 3 0 0\n0 0 0 0\n1 1 0 0\n2 0 1 0\n3 0 0 1\n"
        )
        (tmp_path / "t.ele").write_text("1 4 0\n0 0 1 2 3\n")
        m = load_tetgen(str(tmp_path / "t.node"), str(tmp_path / "t.ele"))
        assert m.tets.min() == 0
        assert (_tet_volumes(m.vertices, m.tets) > 0).all()

    def test_inverted_tet_is_fixed(self):
        verts = np.array(
            [[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0], [0.0, 0, 1]]
        )
        tets = np.array([[0, 2, 1, 3]], dtype=np.int32)  # negative volume
        m = TetMesh(verts, tets)
        assert (_tet_volumes(m.vertices, m.tets) > 0).all()


class TestWatertight:
    def test_open_mesh_rejected(self):
        verts = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0]])
        tris = np.array([[0, 1, 2]], dtype=np.int32)
        m = SurfaceMesh(verts, tris)
        assert not m.is_watertight()

    def test_non_manifold_rejected(self):
        # three triangles sharing one edge
        verts = np.array(
            [[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0], [0.0, 0, 1], [0.0, -1, 0]]
        )
        tris = np.array([[0, 1, 2], [0, 3, 1], [0, 1, 4]], dtype=np.int32)
        m = SurfaceMesh(verts, tris)
        assert not m.is_watertight()


class TestTransformed:
    def test_rigid_transform(self):
        m = box_surface((1.0, 1.0, 1.0))
        c, s = np.cos(0.3), np.sin(0.3)
        rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
        t = np.array([1.0, 2.0, 3.0])
        m2 = m.transformed(rotation=rot, translation=t)
        assert np.allclose(m2.vertices, m.vertices @ rot.T + t)
        assert (m2.triangles == m.triangles).all()
