"""Conservative advancement CCD: trivial cases, the analytic drop, and the
post-advance positivity guarantee."""

import numpy as np
import pytest

from srsim.geometry import (
    box_surface,
    broad_phase_ccd,
    ccd_earliest_alpha,
    unique_edges,
)
from srsim.geometry.broadphase import CollisionTables
from srsim.geometry.ccd import IntersectionError, ground_ccd, pair_ccd
from srsim.geometry.distance import edge_edge_dist2, point_triangle_dist2


def _pt_stencil(p, t0, t1, t2):
    return np.stack([p, t0, t1, t2])[None]


class TestPairCcd:
    def test_zero_displacement(self):
        x = _pt_stencil(
            np.array([0.2, 1.0, 0.3]),
            np.array([-5.0, 0, -5]),
            np.array([5.0, 0, -5]),
            np.array([0.0, 0, 5]),
        )
        alpha = pair_ccd(x, np.zeros_like(x), "pt")
        assert alpha[0] == 1.0

    def test_point_drop_onto_large_triangle(self):
        # point at height 1 moving down 2: impact time 0.5, conservative 0.45
        x = _pt_stencil(
            np.array([0.1, 1.0, 0.1]),
            np.array([-50.0, 0, -50]),
            np.array([50.0, 0, -50]),
            np.array([0.0, 0, 50]),
        )
        dx = np.zeros_like(x)
        dx[0, 0, 1] = -2.0
        alpha = pair_ccd(x, dx, "pt")
        assert alpha[0] <= 0.5
        assert alpha[0] >= 0.45 - 1e-12

    def test_separating(self):
        x = _pt_stencil(
            np.array([0.0, 0.5, 0.0]),
            np.array([-1.0, 0, -1]),
            np.array([1.0, 0, -1]),
            np.array([0.0, 0, 1]),
        )
        dx = np.zeros_like(x)
        dx[0, 0, 1] = +3.0  # moving away
        alpha = pair_ccd(x, dx, "pt")
        assert alpha[0] == 1.0

    def test_common_translation_ignored(self):
        # rigid common motion produces no relative displacement
        x = _pt_stencil(
            np.array([0.0, 0.1, 0.0]),
            np.array([-1.0, 0, -1]),
            np.array([1.0, 0, -1]),
            np.array([0.0, 0, 1]),
        )
        dx = np.ones_like(x) * 7.3
        alpha = pair_ccd(x, dx, "pt")
        assert alpha[0] == 1.0

    def test_edge_edge_crossing(self):
        a = np.array([[-1.0, 0.5, 0], [1.0, 0.5, 0]])
        b = np.array([[0.0, 0.0, -1], [0.0, 0.0, 1]])
        x = np.concatenate([a, b])[None]
        dx = np.zeros_like(x)
        dx[0, :2, 1] = -1.0  # edge a sweeps down through edge b
        alpha = pair_ccd(x, dx, "ee")
        assert alpha[0] < 0.5
        # post-advance distance strictly positive
        xa = x + alpha[0] * dx
        d2, _, _ = edge_edge_dist2(xa[0, 0], xa[0, 1], xa[0, 2], xa[0, 3])
        assert d2 > 0

    def test_initial_contact_raises(self):
        x = _pt_stencil(
            np.array([0.0, 0.0, 0.0]),
            np.array([-1.0, 0, -1]),
            np.array([1.0, 0, -1]),
            np.array([0.0, 0, 1]),
        )
        dx = np.zeros_like(x)
        dx[0, 0, 1] = -1.0
        with pytest.raises(IntersectionError):
            pair_ccd(x, dx, "pt")


class TestGroundCcd:
    def test_exact_crossing(self):
        alpha = ground_ccd(np.array([1.0]), np.array([-2.0]), 0.0)
        assert alpha == pytest.approx(0.45, abs=1e-12)

    def test_no_crossing(self):
        assert ground_ccd(np.array([1.0]), np.array([-0.5]), 0.0) == 1.0
        assert ground_ccd(np.array([1.0]), np.array([2.0]), 0.0) == 1.0

    def test_below_ground_raises(self):
        with pytest.raises(IntersectionError):
            ground_ccd(np.array([-0.1]), np.array([0.0]), 0.0)


def _cube_tables(n_bodies=1, rigid=True):
    m = box_surface((1.0, 1.0, 1.0))
    tris = np.concatenate(
        [m.triangles + 8 * b for b in range(n_bodies)]
    ).astype(np.int32)
    edges = unique_edges(tris)
    return CollisionTables(
        tris=tris,
        edges=edges,
        vert_body=np.repeat(np.arange(n_bodies), 8),
        tri_body=np.repeat(np.arange(n_bodies), 12),
        edge_body=np.repeat(np.arange(n_bodies), len(edges) // n_bodies),
        body_is_rigid=np.full(n_bodies, rigid),
        body_is_kinematic=np.zeros(n_bodies, dtype=bool),
    )


class TestSceneCcd:
    def test_post_advance_distances_positive(self):
        # two cubes on a collision course: advance by alpha, then check
        # every candidate pair distance stays strictly positive
        m = box_surface((1.0, 1.0, 1.0))
        tables = _cube_tables(2)
        x = np.concatenate([m.vertices, m.vertices + np.array([3.0, 0.27, 0.11])])
        dx = np.zeros_like(x)
        dx[8:, 0] = -3.2  # overshoots through the first cube
        cand = broad_phase_ccd(x, dx, tables)
        alpha = ccd_earliest_alpha(x, dx, cand, tables, ground_y=None)
        assert 0 < alpha < 1
        xa = x + alpha * dx
        eps = 1e-12
        for v, t in cand.pt:
            tv = tables.tris[t]
            d2, _ = point_triangle_dist2(xa[v], xa[tv[0]], xa[tv[1]], xa[tv[2]])
            assert d2 > eps
        for i, j in cand.ee:
            a, b = tables.edges[i], tables.edges[j]
            d2, _, _ = edge_edge_dist2(xa[a[0]], xa[a[1]], xa[b[0]], xa[b[1]])
            assert d2 > eps

    def test_cube_drop_onto_ground(self):
        m = box_surface((1.0, 1.0, 1.0))
        tables = _cube_tables(1)
        x = m.vertices + np.array([0.0, 1.0, 0.0])  # bottom face at 0.5
        dx = np.zeros_like(x)
        dx[:, 1] = -1.0  # bottom would end at -0.5
        cand = broad_phase_ccd(x, dx, tables, ground_y=0.0)
        alpha = ccd_earliest_alpha(x, dx, cand, tables, ground_y=0.0)
        # impact fraction 0.5, conservative factor 0.9
        assert alpha == pytest.approx(0.45, abs=1e-12)
        assert (x + alpha * dx)[:, 1].min() > 0

    def test_no_candidates_full_step(self):
        tables = _cube_tables(1)
        x = box_surface((1.0, 1.0, 1.0)).vertices + np.array([0.0, 5.0, 0.0])
        dx = np.zeros_like(x)
        dx[:, 1] = -0.5
        cand = broad_phase_ccd(x, dx, tables, ground_y=0.0)
        alpha = ccd_earliest_alpha(x, dx, cand, tables, ground_y=0.0)
        assert alpha == 1.0
